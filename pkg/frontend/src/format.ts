import { Label, LABELS } from "./types.js";

export const LABEL_TITLES: Record<Label, string> = {
  safe: "Safe",
  adult_content: "Adult Content",
  harmful_content: "Harmful Content",
  suicide: "Suicide",
};

// Shown as in-dashboard guidance next to the relabel control.
export const LABEL_GUIDANCE: Record<Label, string> = {
  safe: "Appropriate for children: no violence, sexuality, strong language, or dangerous behaviour.",
  adult_content: "Sexual elements, nudity, or suggestive material not suitable for children.",
  harmful_content: "Violence, dangerous acts, or behaviour that may negatively influence children.",
  suicide: "References to suicidal behaviour, intentions, or methods.",
};

/** Integer percentages that always sum to exactly 100 (largest remainder). */
export function percentages(probabilities: number[]): number[] {
  const raw = probabilities.map((p) => p * 100);
  const floors = raw.map(Math.floor);
  let short = 100 - floors.reduce((a, b) => a + b, 0);
  const order = raw
    .map((value, index) => ({ index, frac: value - Math.floor(value) }))
    .sort((a, b) => b.frac - a.frac);
  for (const { index } of order) {
    if (short <= 0) break;
    floors[index] += 1;
    short -= 1;
  }
  return floors;
}

export interface EvidenceText {
  asr: string;
  ocr: string;
}

/** Split the composed `Audio: ... | OCR: ...` template back into its sides. */
export function splitComposed(composed: string): EvidenceText {
  if (!composed) return { asr: "", ocr: "" };
  const marker = " | OCR: ";
  const prefix = "Audio: ";
  const at = composed.indexOf(marker);
  if (!composed.startsWith(prefix) || at < 0) {
    return { asr: composed, ocr: "" };
  }
  return {
    asr: composed.slice(prefix.length, at),
    ocr: composed.slice(at + marker.length),
  };
}

export function formatCount(n: number): string {
  if (n >= 1_000_000) return `${(n / 1_000_000).toFixed(1)}M`;
  if (n >= 1_000) return `${(n / 1_000).toFixed(1)}k`;
  return String(n);
}

export function formatTime(epochSeconds: number): string {
  if (!epochSeconds) return "-";
  return new Date(epochSeconds * 1000).toLocaleTimeString();
}

export function labelList(): Label[] {
  return [...LABELS];
}
