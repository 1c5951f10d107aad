// Chart scaling math. The console never derives epidemiological numbers;
// this is the one place it computes anything, and it is pure pixels.

export type ScaleKind = "linear" | "log";

export interface Scale {
  toPx(value: number): number;
  domain: [number, number];
}

export function makeValueScale(
  values: number[],
  kind: ScaleKind,
  heightPx: number,
): Scale {
  if (heightPx <= 0) throw new Error("heightPx must be positive");
  if (kind === "log") {
    const positives = values.filter((v) => v > 0);
    const hi = Math.max(1, ...positives);
    const lo = Math.min(1, ...(positives.length ? positives : [1]));
    const logLo = Math.log10(lo);
    const span = Math.max(Math.log10(hi) - logLo, 1e-9);
    return {
      domain: [lo, hi],
      toPx(value: number): number {
        const clamped = Math.max(value, lo);
        return heightPx - ((Math.log10(clamped) - logLo) / span) * heightPx;
      },
    };
  }
  const hi = Math.max(1, ...values);
  return {
    domain: [0, hi],
    toPx(value: number): number {
      return heightPx - (value / hi) * heightPx;
    },
  };
}

export function makeIndexScale(count: number, widthPx: number): (index: number) => number {
  if (count <= 1) return () => 0;
  return (index: number) => (index / (count - 1)) * widthPx;
}

export function pathFrom(xs: number[], ys: number[]): string {
  if (xs.length !== ys.length) throw new Error("xs/ys length mismatch");
  return xs
    .map((x, i) => `${i === 0 ? "M" : "L"}${x.toFixed(1)},${(ys[i] as number).toFixed(1)}`)
    .join(" ");
}
