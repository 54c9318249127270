/**
 * Mock models served over the wire.
 *
 * mock:hub mirrors the toolkit's builtin hub oracle bit for bit so a
 * cross-implementation benchmark run lands on the same predictions:
 * strip cut edges, then look for a node adjacent to every other node of
 * its component, counting only components of four or more nodes.
 * Positive instances score [eps, 1 - eps] with eps = 0.05.
 */

import {
  GraphInput,
  connectedComponents,
  cutEdges,
  degrees,
  edgeKey,
  parseGraph,
} from "./graphs.js";

export interface ServedModel {
  readonly nClasses: number;
  readonly accepts: "graph" | "series";
  /** Probability vector for one wire input; throws on malformed input. */
  predict(input: unknown): number[];
}

const SMOOTHING = 0.05;

function smoothed(positive: boolean): number[] {
  return positive ? [SMOOTHING, 1 - SMOOTHING] : [1 - SMOOTHING, SMOOTHING];
}

export function hasHub(g: GraphInput): boolean {
  const cuts = cutEdges(g);
  const kept: GraphInput = cuts.size
    ? { ...g, edges: g.edges.filter(([u, v]) => !cuts.has(edgeKey(u, v))) }
    : g;
  const deg = degrees(kept);
  for (const comp of connectedComponents(kept)) {
    if (comp.length < 4) continue;
    const want = comp.length - 1;
    if (comp.some((v) => deg[v] === want)) return true;
  }
  return false;
}

export function hubModel(): ServedModel {
  return {
    nClasses: 2,
    accepts: "graph",
    predict: (input) => smoothed(hasHub(parseGraph(input))),
  };
}

export function constantModel(probs: number[] = [0.5, 0.5]): ServedModel {
  return {
    nClasses: probs.length,
    accepts: "graph",
    predict: (input) => {
      parseGraph(input);
      return probs.slice();
    },
  };
}

export function resolveModel(spec: string): ServedModel {
  switch (spec) {
    case "mock:hub":
      return hubModel();
    case "mock:constant":
      return constantModel();
    default:
      throw new Error(`unknown model: ${spec} (expected mock:hub or mock:constant)`);
  }
}
