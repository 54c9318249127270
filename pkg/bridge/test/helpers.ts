import { GraphInput } from "../src/graphs.js";

/** Wheel on n nodes, hub last, matching the benchmark generator. */
export function wheel(n: number): GraphInput {
  const edges: Array<[number, number]> = [];
  for (let i = 0; i < n - 1; i++) {
    const j = (i + 1) % (n - 1);
    edges.push(i < j ? [i, j] : [j, i]);
  }
  for (let i = 0; i < n - 1; i++) edges.push([i, n - 1]);
  return { numNodes: n, edges, features: null };
}

export function cycle(n: number): GraphInput {
  const edges: Array<[number, number]> = [];
  for (let i = 0; i < n; i++) {
    const j = (i + 1) % n;
    edges.push(i < j ? [i, j] : [j, i]);
  }
  return { numNodes: n, edges, features: null };
}

/** Shift a graph's labels by an offset, for pasting graphs together. */
export function shift(g: GraphInput, by: number): Array<[number, number]> {
  return g.edges.map(([u, v]) => [u + by, v + by]);
}

export function toWire(g: GraphInput): object {
  return { num_nodes: g.numNodes, edges: g.edges.map((e) => [...e]) };
}
