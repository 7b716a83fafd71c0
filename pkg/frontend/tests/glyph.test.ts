import { describe, expect, it } from "vitest";

import { barGlyph, sharedScale } from "../src/glyph.js";

function barHeights(svg: string): number[] {
  return [...svg.matchAll(/height="([0-9.]+)" class="glyph-bar/g)].map((m) =>
    parseFloat(m[1]),
  );
}

describe("sharedScale", () => {
  it("takes the largest magnitude across both sides", () => {
    expect(sharedScale([0.5, -2.0], [1.0, 0.25])).toBe(2.0);
    expect(sharedScale([0.1], [-3.5])).toBe(3.5);
  });

  it("never collapses to zero", () => {
    expect(sharedScale([0, 0], [0])).toBeGreaterThan(0);
  });
});

describe("barGlyph", () => {
  it("draws one bar per dimension", () => {
    const svg = barGlyph([1, -0.5, 0.25, 2], 2);
    expect(barHeights(svg)).toHaveLength(4);
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg.endsWith("</svg>")).toBe(true);
  });

  it("labels each bar with its dimension and value", () => {
    const svg = barGlyph([0.5, -1.25], 2);
    expect(svg).toContain("<title>f0 = 0.5000</title>");
    expect(svg).toContain("<title>f1 = -1.250</title>");
    expect(svg).toContain(">0</text>");
    expect(svg).toContain(">1</text>");
  });

  it("scales bar heights relative to the shared scale", () => {
    const tall = barHeights(barGlyph([1, 2], 2));
    const short = barHeights(barGlyph([1, 2], 4));
    expect(short[0]).toBeCloseTo(tall[0] / 2, 5);
    expect(short[1]).toBeCloseTo(tall[1] / 2, 5);
  });

  it("draws the full extent for a value at the scale", () => {
    const svg = barGlyph([2], 2, 100, 100);
    expect(barHeights(svg)[0]).toBeCloseTo(100 / 2 - 7, 0);
  });

  it("drops per-bar index labels for wide vectors", () => {
    const svg = barGlyph(new Array(64).fill(0.5), 1);
    expect(svg).not.toContain("</text>");
    expect(barHeights(svg)).toHaveLength(64);
  });

  it("rejects empty vectors and bad scales", () => {
    expect(() => barGlyph([], 1)).toThrow("empty");
    expect(() => barGlyph([1], 0)).toThrow("scale");
    expect(() => barGlyph([1], -2)).toThrow("scale");
  });
});
