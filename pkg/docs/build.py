"""Build the markdown docs into a minimal static site under docs/_site/.

Usage: python3 docs/build.py [output_dir]
"""
import html
import re
import sys
from pathlib import Path

DOCS_DIR = Path(__file__).resolve().parent

PAGE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ max-width: 52rem; margin: 2rem auto; padding: 0 1rem;
       font-family: system-ui, sans-serif; line-height: 1.5; }}
pre {{ background: #f4f4f4; padding: 0.8rem; overflow-x: auto; }}
code {{ background: #f4f4f4; padding: 0 0.2rem; }}
table {{ border-collapse: collapse; }}
td, th {{ border: 1px solid #ccc; padding: 0.3rem 0.6rem; text-align: left; }}
</style>
</head>
<body>
{body}
</body>
</html>
"""


def _inline(text: str) -> str:
    out = html.escape(text, quote=False)
    out = re.sub(r"`([^`]+)`", r"<code>\1</code>", out)
    out = re.sub(r"\[([^\]]+)\]\(([^)]+)\.md\)", r'<a href="\2.html">\1</a>', out)
    out = re.sub(r"\[([^\]]+)\]\(([^)]+)\)", r'<a href="\2">\1</a>', out)
    out = re.sub(r"\*\*([^*]+)\*\*", r"<strong>\1</strong>", out)
    return out


def render(markdown: str) -> str:
    """Tiny markdown subset: headings, fences, lists, tables, paragraphs."""
    lines = markdown.splitlines()
    parts = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("```"):
            block = []
            i += 1
            while i < len(lines) and not lines[i].startswith("```"):
                block.append(lines[i])
                i += 1
            parts.append("<pre><code>" + html.escape("\n".join(block)) + "</code></pre>")
        elif re.match(r"#{1,6} ", line):
            level = len(line) - len(line.lstrip("#"))
            parts.append(f"<h{level}>{_inline(line[level + 1:])}</h{level}>")
        elif line.startswith("|"):
            rows = []
            while i < len(lines) and lines[i].startswith("|"):
                cells = [c.strip() for c in lines[i].strip("|").split("|")]
                if not all(re.fullmatch(r":?-+:?", c) for c in cells):  # skip separator
                    rows.append(cells)
                i += 1
            i -= 1
            body = ["<tr>" + "".join(f"<{'th' if j == 0 else 'td'}>{_inline(c)}</{'th' if j == 0 else 'td'}>"
                                     for c in row) + "</tr>"
                    for j, row in enumerate(rows)]
            parts.append("<table>" + "".join(body) + "</table>")
        elif line.startswith("- "):
            items = []
            while i < len(lines) and (lines[i].startswith("- ") or lines[i].startswith("  ")):
                if lines[i].startswith("- "):
                    items.append(lines[i][2:])
                else:
                    items[-1] += " " + lines[i].strip()
                i += 1
            i -= 1
            parts.append("<ul>" + "".join(f"<li>{_inline(it)}</li>" for it in items) + "</ul>")
        elif line.strip():
            para = [line]
            while i + 1 < len(lines) and lines[i + 1].strip() and not re.match(
                    r"(```|#{1,6} |\||- )", lines[i + 1]):
                i += 1
                para.append(lines[i])
            parts.append(f"<p>{_inline(' '.join(p.strip() for p in para))}</p>")
        i += 1
    return "\n".join(parts)


def build(out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for source in sorted(DOCS_DIR.glob("*.md")):
        text = source.read_text(encoding="utf-8")
        title_match = re.search(r"^# (.+)$", text, flags=re.M)
        title = title_match.group(1) if title_match else source.stem
        target = out_dir / (source.stem + ".html")
        target.write_text(PAGE.format(title=html.escape(title), body=render(text)),
                          encoding="utf-8")
        written.append(target)
    return written


if __name__ == "__main__":
    destination = Path(sys.argv[1]) if len(sys.argv) > 1 else DOCS_DIR / "_site"
    for page in build(destination):
        print(page)
