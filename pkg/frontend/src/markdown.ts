// Small markdown renderer that is safe by construction: the source text
// is entity-escaped before any tags are added, so model output can never
// smuggle markup into the page. Only the constructs the assistant
// actually emits are supported (headings, lists, emphasis, code,
// links, citation markers).

function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function renderInline(text: string, citations?: Set<number>): string {
  let out = escapeHtml(text);

  out = out.replace(/`([^`]+)`/g, (_m, code) => `<code>${code}</code>`);

  // [label](url): only plain http(s) links survive, anything else is
  // rendered as its label text
  out = out.replace(/\[([^\]\d][^\]]*)\]\(([^)\s]+)\)/g, (_m, label, url) => {
    if (!/^https?:\/\//i.test(url)) return label;
    return `<a href="${url}" target="_blank" rel="noopener noreferrer">${label}</a>`;
  });

  // citation markers [n] link to their entry in the citation list
  out = out.replace(/\[(\d+)\]/g, (m, num) => {
    const n = parseInt(num, 10);
    if (citations && !citations.has(n)) return m;
    return `<a class="citation-marker" href="#cite-${n}">[${n}]</a>`;
  });

  out = out.replace(/\*\*([^*]+)\*\*/g, "<strong>$1</strong>");
  out = out.replace(/\*([^*]+)\*/g, "<em>$1</em>");
  return out;
}

export function renderMarkdown(source: string, citationNumbers?: Set<number>): string {
  const lines = source.split(/\r?\n/);
  const html: string[] = [];
  let paragraph: string[] = [];
  let list: string[] | null = null;
  let fence: string[] | null = null;

  const flushParagraph = () => {
    if (paragraph.length) {
      html.push(`<p>${renderInline(paragraph.join(" "), citationNumbers)}</p>`);
      paragraph = [];
    }
  };
  const flushList = () => {
    if (list) {
      html.push(`<ul>${list.join("")}</ul>`);
      list = null;
    }
  };

  for (const line of lines) {
    if (fence !== null) {
      if (line.trim().startsWith("```")) {
        html.push(`<pre><code>${escapeHtml(fence.join("\n"))}</code></pre>`);
        fence = null;
      } else {
        fence.push(line);
      }
      continue;
    }
    if (line.trim().startsWith("```")) {
      flushParagraph();
      flushList();
      fence = [];
      continue;
    }
    const heading = line.match(/^(#{1,4})\s+(.*)$/);
    if (heading) {
      flushParagraph();
      flushList();
      const level = heading[1].length;
      html.push(`<h${level}>${renderInline(heading[2], citationNumbers)}</h${level}>`);
      continue;
    }
    const item = line.match(/^\s*[-*]\s+(.*)$/);
    if (item) {
      flushParagraph();
      list = list ?? [];
      list.push(`<li>${renderInline(item[1], citationNumbers)}</li>`);
      continue;
    }
    if (line.trim() === "") {
      flushParagraph();
      flushList();
      continue;
    }
    flushList();
    paragraph.push(line.trim());
  }
  if (fence !== null) {
    html.push(`<pre><code>${escapeHtml(fence.join("\n"))}</code></pre>`);
  }
  flushParagraph();
  flushList();
  return html.join("\n");
}
