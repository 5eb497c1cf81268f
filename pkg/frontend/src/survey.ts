// Post-negotiation survey: two 1-5 ratings with labeled anchors.

import { SurveyRequest } from "./types.js";

export const SATISFACTION_ANCHORS = [
  "Extremely dissatisfied",
  "Somewhat dissatisfied",
  "Neither",
  "Somewhat satisfied",
  "Extremely satisfied",
];

export const LIKENESS_ANCHORS = [
  "Extremely dislike",
  "Somewhat dislike",
  "Neither",
  "Somewhat like",
  "Extremely like",
];

export interface SurveyModel {
  satisfaction: number | null;
  likeness: number | null;
  comments: string;
}

export function emptySurvey(): SurveyModel {
  return { satisfaction: null, likeness: null, comments: "" };
}

export function isComplete(model: SurveyModel): boolean {
  return (
    model.satisfaction !== null &&
    model.likeness !== null &&
    model.satisfaction >= 1 &&
    model.satisfaction <= 5 &&
    model.likeness >= 1 &&
    model.likeness <= 5
  );
}

export function surveyPayload(model: SurveyModel): SurveyRequest {
  if (!isComplete(model)) {
    throw new Error("both ratings are required, each between 1 and 5");
  }
  return {
    satisfaction: model.satisfaction as number,
    likeness: model.likeness as number,
    comments: model.comments || undefined,
  };
}
