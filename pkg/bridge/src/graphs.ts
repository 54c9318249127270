/**
 * Wire-format graph inputs and the structure queries the mocks need.
 *
 * A graph arrives as {"num_nodes": n, "edges": [[u,v],...], "features":
 * [[...],...]} with features optional; a series wraps one graph per
 * snapshot under "snapshots".  Parsing is strict: anything malformed
 * throws InputError with a JSON-path-ish location, which the session
 * turns into a protocol error object.
 */

export interface GraphInput {
  numNodes: number;
  /** Canonical pairs, smaller index first. */
  edges: Array<[number, number]>;
  features: number[][] | null;
}

export class InputError extends Error {}

function fail(msg: string, path: string): never {
  throw new InputError(`${msg} at ${path}`);
}

export function parseGraph(obj: unknown, path = "$"): GraphInput {
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    fail("expected a graph object", path);
  }
  const rec = obj as Record<string, unknown>;
  const n = rec["num_nodes"];
  if (typeof n !== "number" || !Number.isInteger(n) || n < 1) {
    fail("num_nodes must be a positive integer", `${path}.num_nodes`);
  }
  const rawEdges = rec["edges"] ?? [];
  if (!Array.isArray(rawEdges)) {
    fail("edges must be an array", `${path}.edges`);
  }
  const seen = new Set<string>();
  const edges: Array<[number, number]> = [];
  rawEdges.forEach((e, i) => {
    const ep = `${path}.edges[${i}]`;
    if (
      !Array.isArray(e) ||
      e.length !== 2 ||
      !e.every((v) => typeof v === "number" && Number.isInteger(v))
    ) {
      fail("edge must be a pair of integers", ep);
    }
    let [u, v] = e as [number, number];
    if (u === v) fail("self loops are not allowed", ep);
    if (u > v) [u, v] = [v, u];
    if (u < 0 || v >= n) fail("edge endpoint out of range", ep);
    const key = `${u}-${v}`;
    if (seen.has(key)) fail("duplicate edge", ep);
    seen.add(key);
    edges.push([u, v]);
  });
  let features: number[][] | null = null;
  const rawFeats = rec["features"];
  if (rawFeats !== undefined && rawFeats !== null) {
    if (!Array.isArray(rawFeats) || rawFeats.length !== n) {
      fail(`features must have one row per node (${n})`, `${path}.features`);
    }
    features = rawFeats.map((row, i) => {
      const rp = `${path}.features[${i}]`;
      if (!Array.isArray(row) || !row.every((x) => typeof x === "number" && Number.isFinite(x))) {
        fail("feature row must be an array of finite numbers", rp);
      }
      if (i > 0 && row.length !== (rawFeats[0] as unknown[]).length) {
        fail("feature rows must all have the same width", rp);
      }
      return (row as number[]).slice();
    });
  }
  return { numNodes: n, edges, features };
}

export function parseSeries(obj: unknown, path = "$"): GraphInput[] {
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    fail("expected a series object", path);
  }
  const raw = (obj as Record<string, unknown>)["snapshots"];
  if (!Array.isArray(raw) || raw.length === 0) {
    fail("snapshots must be a non-empty array", `${path}.snapshots`);
  }
  const snaps = raw.map((s, i) => parseGraph(s, `${path}.snapshots[${i}]`));
  for (let i = 1; i < snaps.length; i++) {
    if (snaps[i].numNodes !== snaps[0].numNodes) {
      fail(
        `snapshot has ${snaps[i].numNodes} nodes, expected ${snaps[0].numNodes}`,
        `${path}.snapshots[${i}]`,
      );
    }
  }
  return snaps;
}

export function edgeKey(u: number, v: number): string {
  return u < v ? `${u}-${v}` : `${v}-${u}`;
}

function neighborLists(g: GraphInput): Array<Array<{ to: number; edge: number }>> {
  const adj: Array<Array<{ to: number; edge: number }>> = Array.from(
    { length: g.numNodes },
    () => [],
  );
  g.edges.forEach(([u, v], idx) => {
    adj[u].push({ to: v, edge: idx });
    adj[v].push({ to: u, edge: idx });
  });
  return adj;
}

export function degrees(g: GraphInput): number[] {
  const deg = new Array<number>(g.numNodes).fill(0);
  for (const [u, v] of g.edges) {
    deg[u]++;
    deg[v]++;
  }
  return deg;
}

export function connectedComponents(g: GraphInput): number[][] {
  const adj = neighborLists(g);
  const comp = new Array<number>(g.numNodes).fill(-1);
  const out: number[][] = [];
  for (let root = 0; root < g.numNodes; root++) {
    if (comp[root] !== -1) continue;
    const members = [root];
    comp[root] = out.length;
    for (let head = 0; head < members.length; head++) {
      for (const { to } of adj[members[head]]) {
        if (comp[to] === -1) {
          comp[to] = out.length;
          members.push(to);
        }
      }
    }
    out.push(members);
  }
  return out;
}

/** Edges whose removal disconnects their component, as canonical keys. */
export function cutEdges(g: GraphInput): Set<string> {
  const adj = neighborLists(g);
  const disc = new Array<number>(g.numNodes).fill(-1);
  const low = new Array<number>(g.numNodes).fill(0);
  const out = new Set<string>();
  let timer = 0;
  for (let root = 0; root < g.numNodes; root++) {
    if (disc[root] !== -1) continue;
    // frames: [node, edge index taken to reach it, next neighbor slot]
    const stack: Array<[number, number, number]> = [[root, -1, 0]];
    disc[root] = low[root] = timer++;
    while (stack.length > 0) {
      const frame = stack[stack.length - 1];
      const u = frame[0];
      if (frame[2] < adj[u].length) {
        const { to, edge } = adj[u][frame[2]++];
        if (edge === frame[1]) continue;
        if (disc[to] === -1) {
          disc[to] = low[to] = timer++;
          stack.push([to, edge, 0]);
        } else {
          low[u] = Math.min(low[u], disc[to]);
        }
      } else {
        stack.pop();
        if (stack.length > 0) {
          const parent = stack[stack.length - 1][0];
          low[parent] = Math.min(low[parent], low[u]);
          if (low[u] > disc[parent]) {
            const [a, b] = g.edges[frame[1]];
            out.add(edgeKey(a, b));
          }
        }
      }
    }
  }
  return out;
}
