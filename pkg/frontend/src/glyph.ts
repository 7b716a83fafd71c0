/** Bar-glyph rendering of feature vectors.
 *
 * Synthetic samples have no imagery, so each side of a pair is drawn as a
 * labeled bar chart: one bar per dimension around a zero baseline. Both
 * sides of a pair must share the same scale or the comparison would lie,
 * hence sharedScale().
 */

const BAR_GAP = 2;
const LABEL_LIMIT = 32;

export function sharedScale(left: number[], right: number[]): number {
  let top = 0;
  for (const value of left) top = Math.max(top, Math.abs(value));
  for (const value of right) top = Math.max(top, Math.abs(value));
  return Math.max(top, 1e-9);
}

export function barGlyph(
  features: number[],
  scale: number,
  width = 260,
  height = 130,
): string {
  if (features.length === 0) {
    throw new Error("cannot render an empty feature vector");
  }
  if (!(scale > 0)) {
    throw new Error(`scale must be positive, got ${scale}`);
  }
  const n = features.length;
  const labeled = n <= LABEL_LIMIT;
  const chartHeight = labeled ? height - 14 : height;
  const baseline = chartHeight / 2;
  const slot = width / n;
  const barWidth = Math.max(1, slot - BAR_GAP);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `class="glyph" role="img">`,
    `<line x1="0" y1="${baseline}" x2="${width}" y2="${baseline}" class="glyph-axis"/>`,
  ];
  for (let i = 0; i < n; i++) {
    const value = features[i];
    const extent = (Math.abs(value) / scale) * baseline;
    const x = i * slot + BAR_GAP / 2;
    const y = value >= 0 ? baseline - extent : baseline;
    const cls = value >= 0 ? "glyph-bar-pos" : "glyph-bar-neg";
    parts.push(
      `<rect x="${x.toFixed(2)}" y="${y.toFixed(2)}" ` +
        `width="${barWidth.toFixed(2)}" height="${extent.toFixed(2)}" class="${cls}">` +
        `<title>f${i} = ${value.toPrecision(4)}</title></rect>`,
    );
    if (labeled) {
      parts.push(
        `<text x="${(i * slot + slot / 2).toFixed(2)}" y="${height - 3}" ` +
          `class="glyph-label" text-anchor="middle">${i}</text>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("");
}
