import { describe, expect, it } from "vitest";

import { makeIndexScale, makeValueScale, pathFrom } from "../src/scale.js";
import { lineChartSvg } from "../src/chart.js";

describe("value scales", () => {
  it("linear maps 0 to the bottom and max to the top", () => {
    const scale = makeValueScale([0, 50, 100], "linear", 200);
    expect(scale.toPx(0)).toBe(200);
    expect(scale.toPx(100)).toBe(0);
    expect(scale.toPx(50)).toBe(100);
  });

  it("log spaces decades evenly", () => {
    const scale = makeValueScale([1, 10, 100], "log", 200);
    expect(scale.toPx(1)).toBeCloseTo(200);
    expect(scale.toPx(100)).toBeCloseTo(0);
    expect(scale.toPx(10)).toBeCloseTo(100);
  });

  it("log clamps zeros to the floor instead of -Infinity", () => {
    const scale = makeValueScale([0, 10, 1000], "log", 100);
    expect(Number.isFinite(scale.toPx(0))).toBe(true);
    expect(scale.toPx(0)).toBe(scale.toPx(1));
  });

  it("index scale spreads points across the width", () => {
    const x = makeIndexScale(5, 400);
    expect(x(0)).toBe(0);
    expect(x(4)).toBe(400);
    expect(x(2)).toBe(200);
  });

  it("builds an svg path string", () => {
    expect(pathFrom([0, 10], [5, 15])).toBe("M0.0,5.0 L10.0,15.0");
  });
});

describe("line chart", () => {
  it("renders one path per series and a highlight marker", () => {
    const svg = lineChartSvg(
      [
        { label: "a", values: [1, 2, 3], color: "#111111" },
        { label: "b", values: [3, 2, 1], color: "#222222" },
      ],
      { highlight: { a: 2 } },
    );
    expect(svg.match(/<path /g)?.length).toBe(2);
    expect(svg).toContain('data-highlight="a"');
    expect(svg).toContain('data-series="b"');
  });

  it("log and linear scales produce different geometry", () => {
    const series = [{ label: "a", values: [1, 10, 100], color: "#111111" }];
    expect(lineChartSvg(series, { scale: "linear" })).not.toBe(
      lineChartSvg(series, { scale: "log" }),
    );
  });
});
