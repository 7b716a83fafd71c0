import { describe, expect, it } from "vitest";

import { CHOICE_LABELS, choiceForKey, labelFor } from "../src/choices.js";

describe("choice to label mapping", () => {
  it("follows the displayed (left, right) orientation", () => {
    expect(labelFor("left")).toBe(1.0);
    expect(labelFor("equal")).toBe(0.5);
    expect(labelFor("right")).toBe(0.0);
  });

  it("covers exactly the three wire values", () => {
    const values = Object.values(CHOICE_LABELS).sort();
    expect(values).toEqual([0.0, 0.5, 1.0]);
  });
});

describe("keyboard shortcuts", () => {
  it("maps the three arrow keys to the three choices", () => {
    expect(choiceForKey("ArrowLeft")).toBe("left");
    expect(choiceForKey("ArrowDown")).toBe("equal");
    expect(choiceForKey("ArrowRight")).toBe("right");
  });

  it("ignores everything else", () => {
    for (const key of ["ArrowUp", "Enter", " ", "a", "1", "Escape"]) {
      expect(choiceForKey(key)).toBeNull();
    }
  });
});
