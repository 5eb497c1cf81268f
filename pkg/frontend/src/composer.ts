// Offer composer and deal grid share one model: three bounded steppers.
// Hard clamping makes infeasible divisions inexpressible.

import { ActPayload } from "./types.js";

export const ISSUE_NAMES = ["books", "hats", "balls"];

export interface StepperModel {
  counts: number[];
  take: number[];
}

export function newSteppers(counts: number[]): StepperModel {
  return { counts: [...counts], take: counts.map(() => 0) };
}

export function clampTake(take: number[], counts: number[]): number[] {
  return counts.map((c, k) => {
    const raw = Number.isFinite(take[k]) ? Math.round(take[k] as number) : 0;
    return Math.min(Math.max(raw, 0), c);
  });
}

export function step(model: StepperModel, issue: number, delta: number): StepperModel {
  const take = [...model.take];
  take[issue] = (take[issue] ?? 0) + delta;
  return { counts: model.counts, take: clampTake(take, model.counts) };
}

export function isFeasible(model: StepperModel): boolean {
  return model.take.every((t, k) => t >= 0 && t <= (model.counts[k] ?? 0));
}

export function proposePayload(model: StepperModel): ActPayload {
  return { kind: "propose", take: clampTake(model.take, model.counts) };
}

export function describeTake(model: StepperModel): string {
  const parts = model.take
    .map((t, k) => (t > 0 ? `${t} ${ISSUE_NAMES[k]}` : ""))
    .filter(Boolean);
  return parts.length ? `you keep ${parts.join(", ")}` : "you keep nothing";
}
