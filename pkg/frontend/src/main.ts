import { mountApp } from "./app";

const root = document.getElementById("app");
if (root) {
  const baseUrl = (window as unknown as { API_BASE_URL?: string }).API_BASE_URL ?? "";
  const app = mountApp(root, baseUrl);
  const sessionId = new URLSearchParams(window.location.search).get("session");
  if (sessionId) {
    void app.loadSession(sessionId);
  }
}
