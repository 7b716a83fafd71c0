/** The three relative judgements and their wire encoding.
 *
 * The displayed (left, right) pair is the service's (i, j) orientation, so
 * "left ranks higher" stores 1, a tie stores 0.5, "right ranks higher"
 * stores 0. Keyboard shortcuts mirror the on-screen button order.
 */

export type Choice = "left" | "equal" | "right";

export const CHOICE_LABELS: Record<Choice, number> = {
  left: 1.0,
  equal: 0.5,
  right: 0.0,
};

export function labelFor(choice: Choice): number {
  return CHOICE_LABELS[choice];
}

export function choiceForKey(key: string): Choice | null {
  switch (key) {
    case "ArrowLeft":
      return "left";
    case "ArrowDown":
      return "equal";
    case "ArrowRight":
      return "right";
    default:
      return null;
  }
}
