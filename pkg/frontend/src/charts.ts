// Inline SVG charts: a polyline sparkline for 24-hour score series and a
// bar strip for the 168-slot weekly history profile.

export function sparklineSvg(values: number[], w = 240, h = 48): string {
  if (values.length < 2) return "";
  const min = Math.min(...values);
  const max = Math.max(...values);
  const range = max - min || 1;
  const pts = values
    .map((v, i) => {
      const x = (i / (values.length - 1)) * (w - 2) + 1;
      const y = h - 2 - ((v - min) / range) * (h - 4);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  return (
    `<svg class="sparkline" data-points="${values.length}" width="${w}" height="${h}" ` +
    `viewBox="0 0 ${w} ${h}" role="img" aria-label="${values.length}-hour score series">` +
    `<polyline points="${pts}" fill="none" stroke="#c22" stroke-width="1.5"/></svg>`
  );
}

export function barsSvg(values: number[], w = 336, h = 64): string {
  if (!values.length) return "";
  const max = Math.max(...values, 1);
  const bw = w / values.length;
  const rects = values
    .map((v, i) => {
      const bh = (v / max) * (h - 2);
      const x = (i * bw).toFixed(2);
      const y = (h - bh).toFixed(2);
      return `<rect class="bar" x="${x}" y="${y}" width="${Math.max(bw - 0.3, 0.4).toFixed(2)}" height="${bh.toFixed(2)}"/>`;
    })
    .join("");
  return (
    `<svg class="bars" data-bars="${values.length}" width="${w}" height="${h}" ` +
    `viewBox="0 0 ${w} ${h}" role="img" aria-label="weekly history profile">${rects}</svg>`
  );
}
