import hashlib
import json
import struct
from pathlib import Path

import httpx
import pytest

from agriplot.config import AppConfig, RagConfig, RegistryConfig, StacConfig, WmsConfig
from agriplot.gateway import Gateway, ModelEndpoint

DATA_DIR = Path(__file__).parent / "data"

# minimal JPEG-looking payload; content-type is what the client validates
FAKE_JPEG = b"\xff\xd8\xff\xe0" + b"\x00" * 96


def text_embedding(text: str, dim: int = 8):
    """Deterministic pseudo-embedding derived from an md5 digest."""
    digest = hashlib.md5(text.encode("utf-8")).digest()
    vals = [struct.unpack("<H", digest[2 * i : 2 * i + 2])[0] / 65535.0 for i in range(dim)]
    return [v - 0.5 for v in vals]


class MockBackend:
    """One in-process handler emulating every external HTTP dependency.

    Roles are dispatched on the request host: {role}.mock for model
    endpoints, wms.mock and stac.mock for geodata services.
    """

    def __init__(self):
        self.chat_handlers = {}  # role -> callable(body) -> str
        self.chat_calls = {}  # role -> list of request bodies
        self.embed_dim = 8
        self.embed_calls = []
        self.rerank_handler = None  # callable(query, docs) -> list[float]
        self.stac_items = []
        self.wms_requests = []
        self.fail_roles = {}  # role -> list of status codes to emit first

    def set_chat(self, role, response):
        self.chat_handlers[role] = response if callable(response) else (lambda body, r=response: r)

    def handler(self, request: httpx.Request) -> httpx.Response:
        host = request.url.host
        path = request.url.path
        if host == "wms.mock":
            self.wms_requests.append(dict(request.url.params))
            params = request.url.params
            missing = [k for k in ("SERVICE", "VERSION", "REQUEST", "CRS", "BBOX", "WIDTH", "HEIGHT", "LAYERS", "FORMAT") if k not in params]
            if missing:
                return httpx.Response(200, content=f"<ServiceExceptionReport>missing {missing}</ServiceExceptionReport>".encode(), headers={"content-type": "text/xml"})
            return httpx.Response(200, content=FAKE_JPEG, headers={"content-type": "image/jpeg"})
        if host == "stac.mock":
            return httpx.Response(200, json={"type": "FeatureCollection", "features": self.stac_items})

        role = host.split(".")[0]
        fails = self.fail_roles.get(role)
        if fails:
            status = fails.pop(0)
            return httpx.Response(status, json={"error": "scripted failure"})

        body = json.loads(request.content.decode("utf-8")) if request.content else {}
        if path.endswith("/chat/completions"):
            self.chat_calls.setdefault(role, []).append(body)
            handler = self.chat_handlers.get(role, self._default_chat(role))
            text = handler(body)
            return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})
        if path.endswith("/embeddings"):
            self.embed_calls.append(body)
            data = [
                {"index": i, "embedding": text_embedding(t, self.embed_dim)}
                for i, t in enumerate(body["input"])
            ]
            return httpx.Response(200, json={"data": data})
        if path.endswith("/rerank"):
            docs = body["documents"]
            if self.rerank_handler:
                scores = self.rerank_handler(body["query"], docs)
            else:
                qtokens = set(body["query"].lower().split())
                scores = [
                    len(qtokens & set(d.lower().split())) / (len(qtokens) or 1)
                    for d in docs
                ]
            return httpx.Response(200, json={"results": [{"index": i, "relevance_score": s} for i, s in enumerate(scores)]})
        return httpx.Response(404, json={"error": f"no mock route for {host}{path}"})

    def _default_chat(self, role):
        def fallback(body):
            prompt = body["messages"][-1]["content"]
            if isinstance(prompt, list):
                prompt = " ".join(p.get("text", "") for p in prompt if isinstance(p, dict))
            if role == "triage":
                return "RAG" if "(none)" in prompt else "BOTH"
            if role == "multimodal":
                return "The image shows a grassy plot with dirt paths, scattered vegetation patches and gently undulating terrain."
            if role == "judge":
                return json.dumps({"correctness": 5, "relevance": 5, "clarity": 4, "completeness": 5, "justification": "Grounded in the provided context."})
            # final model: cite the first document excerpt when present
            answer = "Based on the available plot context, the land looks suitable."
            if "Document excerpt [1]" in prompt:
                answer += " Documented guidance supports this [1]."
            return answer + '\n\n```json\n{"followups": ["What crops suit this soil?", "How steep is the plot?"]}\n```'

        return fallback


def make_endpoints(roles=("final", "multimodal", "embedding", "reranker", "triage", "judge"), max_retries=2):
    return {
        role: ModelEndpoint(role=role, base_url=f"http://{role}.mock", model_name=f"{role}-model", max_retries=max_retries)
        for role in roles
    }


@pytest.fixture
def backend():
    return MockBackend()


@pytest.fixture
def gateway(backend):
    gw = Gateway(make_endpoints(), transport=httpx.MockTransport(backend.handler), sleep=lambda s: None)
    yield gw
    gw.close()


@pytest.fixture
def mock_client(backend):
    client = httpx.Client(transport=httpx.MockTransport(backend.handler))
    yield client
    client.close()


def write_scene_dir(root: Path, day, ndvi_nir=0.8, ndvi_red=0.1, with_scl=True,
                    bbox=(-5.675, 43.500, -5.640, 43.535), cellsize=0.0005):
    """Write a local ASCII-grid scene covering the fixture plots."""
    ncols = int(round((bbox[2] - bbox[0]) / cellsize))
    nrows = int(round((bbox[3] - bbox[1]) / cellsize))
    scene = root / day.isoformat()
    scene.mkdir(parents=True, exist_ok=True)
    header = (
        f"ncols {ncols}\nnrows {nrows}\nxllcorner {bbox[0]}\nyllcorner {bbox[1]}\n"
        f"cellsize {cellsize}\nNODATA_value -9999\n"
    )

    def write(name, value):
        rows = "\n".join(" ".join(str(value) for _ in range(ncols)) for _ in range(nrows))
        (scene / f"{name}.asc").write_text(header + rows + "\n", encoding="ascii")

    write("nir", ndvi_nir)
    write("red", ndvi_red)
    write("green", 0.2)
    write("blue", 0.05)
    if with_scl:
        write("scl", 4)
    return scene


@pytest.fixture
def app_config(tmp_path):
    return AppConfig(
        registry=RegistryConfig(fixture_path=str(DATA_DIR / "plots.geojson")),
        wms=WmsConfig(endpoint="http://wms.mock/wms"),
        stac=StacConfig(endpoint=None),
        rag=RagConfig(use_reranker=False),
        data_dir=str(tmp_path / "data"),
    )
