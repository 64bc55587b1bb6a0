"""Static SVG charts and the HTML report.

Charts are built as plain SVG strings so identical inputs give
byte-identical output files. Concept colors come from a fixed palette
indexed by concept id and are reused consistently across the bar
chart, the curves, and the colored excerpt spans, where a stronger
occlusion score paints a darker background.
"""

from __future__ import annotations

import html
import json

PALETTE = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860",
    "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd", "#5f9e6e", "#b55d60",
)


def concept_color(concept_id: int) -> str:
    return PALETTE[concept_id % len(PALETTE)]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def svg_bar_chart(values, labels=None, title: str = "", width: int = 640, height: int = 320) -> str:
    """Vertical bar chart; bar i uses concept i's palette color."""
    values = [float(v) for v in values]
    n = len(values)
    labels = [str(i) for i in range(n)] if labels is None else [str(s) for s in labels]
    margin, top = 40, 30
    plot_w, plot_h = width - 2 * margin, height - top - 2 * margin
    vmax = max(values, default=0.0) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{html.escape(title)}</text>',
        f'<line x1="{margin}" y1="{top + plot_h}" x2="{margin + plot_w}" y2="{top + plot_h}" stroke="#333"/>',
        f'<line x1="{margin}" y1="{top}" x2="{margin}" y2="{top + plot_h}" stroke="#333"/>',
        f'<text x="12" y="{top + 4}" font-size="10">{_fmt(vmax)}</text>',
        f'<text x="12" y="{top + plot_h}" font-size="10">0</text>',
    ]
    if n:
        slot = plot_w / n
        bar_w = slot * 0.7
        for i, v in enumerate(values):
            h = 0.0 if vmax == 0 else max(0.0, v) / vmax * plot_h
            x = margin + i * slot + (slot - bar_w) / 2
            y = top + plot_h - h
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
                f'fill="{concept_color(i)}"/>'
            )
            parts.append(
                f'<text x="{x + bar_w / 2:.1f}" y="{top + plot_h + 14}" '
                f'text-anchor="middle">{html.escape(labels[i])}</text>'
            )
            parts.append(
                f'<text x="{x + bar_w / 2:.1f}" y="{y - 3:.1f}" text-anchor="middle" '
                f'font-size="9">{_fmt(v)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_line_chart(series, title: str = "", width: int = 640, height: int = 320,
                   x_label: str = "", y_label: str = "") -> str:
    """Line chart over a dict name -> (xs, ys)."""
    margin, top = 50, 30
    plot_w, plot_h = width - 2 * margin, height - top - 2 * margin
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    if not all_x:
        all_x, all_y = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{html.escape(title)}</text>',
        f'<line x1="{margin}" y1="{top + plot_h}" x2="{margin + plot_w}" y2="{top + plot_h}" stroke="#333"/>',
        f'<line x1="{margin}" y1="{top}" x2="{margin}" y2="{top + plot_h}" stroke="#333"/>',
        f'<text x="{margin - 6}" y="{top + 4}" text-anchor="end" font-size="10">{_fmt(y_hi)}</text>',
        f'<text x="{margin - 6}" y="{top + plot_h}" text-anchor="end" font-size="10">{_fmt(y_lo)}</text>',
        f'<text x="{margin}" y="{top + plot_h + 16}" text-anchor="middle" font-size="10">{_fmt(x_lo)}</text>',
        f'<text x="{margin + plot_w}" y="{top + plot_h + 16}" text-anchor="middle" font-size="10">{_fmt(x_hi)}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 6}" text-anchor="middle" font-size="11">{html.escape(x_label)}</text>',
    ]
    for idx, (name, (xs, ys)) in enumerate(sorted(series.items())):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{margin + plot_w - 4}" y="{top + 14 + 14 * idx}" text-anchor="end" '
            f'fill="{color}">{html.escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def colored_excerpt_html(bundle_dict: dict) -> str:
    """Render one attribution bundle: elements tinted by winning concept,
    darker for more influential elements."""
    text = bundle_dict["excerpt"]["text"]
    if bundle_dict.get("unattributed") or not bundle_dict["elements"]:
        return (
            '<div class="excerpt unattributed">'
            + html.escape(text)
            + " <em>(no concept attribution)</em></div>"
        )
    pieces = []
    pos = 0
    for el in sorted(bundle_dict["elements"], key=lambda e: e["span"][0]):
        s, e = el["span"]
        pieces.append(html.escape(text[pos:s]))
        intensity = max(0.0, min(1.0, el["intensity"]))
        title = f'title="concept {el["concept"]}, score {el["phi"]:.4f}"'
        if intensity == 0.0:
            # an element that only suppresses its concepts stays untinted
            pieces.append(f'<span class="element" {title}>{html.escape(text[s:e])}</span>')
        else:
            color = concept_color(el["concept"])
            alpha = 0.15 + 0.75 * intensity
            pieces.append(
                f'<span class="element" {title} '
                f'style="background-color:{color}{int(alpha * 255):02x}">'
                f"{html.escape(text[s:e])}</span>"
            )
        pos = e
    pieces.append(html.escape(text[pos:]))
    return '<div class="excerpt">' + "".join(pieces) + "</div>"


_CSS = """
body { font-family: sans-serif; max-width: 900px; margin: 2em auto; color: #222; }
h1 { font-size: 1.5em; } h2 { font-size: 1.2em; margin-top: 2em; }
table { border-collapse: collapse; } td, th { border: 1px solid #999; padding: 4px 10px; }
.excerpt { margin: 0.6em 0; line-height: 1.7; }
.element { border-radius: 3px; padding: 1px 2px; }
.unattributed { color: #666; }
.legend-chip { display: inline-block; width: 0.9em; height: 0.9em; border-radius: 3px;
               margin-right: 0.3em; vertical-align: middle; }
footer { margin-top: 3em; font-size: 0.8em; color: #777; border-top: 1px solid #ccc; }
"""


def render_report(
    title: str,
    importance_svg: str | None = None,
    importance_report: dict | None = None,
    fidelity_svg: str | None = None,
    fidelity_summary: dict | None = None,
    bundles: list[dict] | None = None,
    alignment_csv: str | None = None,
    footer_meta: dict | None = None,
) -> str:
    """Assemble the static HTML report from whatever artifacts exist."""
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>{html.escape(title)}</title>",
        f"<style>{_CSS}</style></head><body>",
        f"<h1>{html.escape(title)}</h1>",
    ]
    if importance_svg:
        parts.append("<h2>Concept importance</h2>")
        parts.append(importance_svg)
        if importance_report:
            rows = sorted(importance_report["indices"], key=lambda r: -r["s_total"])
            parts.append("<table><tr><th>concept</th><th>total index</th></tr>")
            for row in rows:
                chip = (
                    f'<span class="legend-chip" '
                    f'style="background:{concept_color(row["concept"])}"></span>'
                )
                parts.append(
                    f'<tr><td>{chip}concept {row["concept"]}</td>'
                    f'<td>{row["s_total"]:.4f}</td></tr>'
                )
            parts.append("</table>")
    if bundles:
        parts.append("<h2>Attributed excerpts</h2>")
        parts.append(
            "<p>Each element is tinted with its winning concept's color; "
            "the darker the tint, the more the element matters for that concept.</p>"
        )
        for b in bundles:
            parts.append(colored_excerpt_html(b))
    if fidelity_svg:
        parts.append("<h2>Faithfulness curves</h2>")
        parts.append(fidelity_svg)
        if fidelity_summary:
            parts.append("<table><tr><th>curve</th><th>importance AUC</th>"
                         "<th>random AUC (mean)</th><th>reverse AUC</th></tr>")
            for kind in sorted(fidelity_summary.get("curves", {})):
                c = fidelity_summary["curves"][kind]
                parts.append(
                    f"<tr><td>{kind}</td><td>{c['importance_auc']:.4f}</td>"
                    f"<td>{c['random_auc_mean']:.4f}</td><td>{c['reverse_auc']:.4f}</td></tr>"
                )
            parts.append("</table>")
    if alignment_csv:
        parts.append("<h2>Annotation alignment</h2>")
        lines = [line for line in alignment_csv.strip().splitlines() if line]
        if lines:
            parts.append("<table>")
            header = lines[0].split(",")
            parts.append("<tr>" + "".join(f"<th>{html.escape(h)}</th>" for h in header) + "</tr>")
            for line in lines[1:]:
                cells = line.split(",")
                parts.append("<tr>" + "".join(f"<td>{html.escape(c)}</td>" for c in cells) + "</tr>")
            parts.append("</table>")
    if footer_meta:
        parts.append("<footer><pre>" + html.escape(json.dumps(footer_meta, sort_keys=True, indent=1)) + "</pre></footer>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"
