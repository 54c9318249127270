import { describe, expect, it } from "vitest";
import { Session } from "../src/protocol.js";
import { hubModel } from "../src/models.js";
import { cycle, toWire, wheel } from "./helpers.js";

function fresh(): Session {
  return new Session(hubModel());
}

function handshake(s: Session): unknown {
  return JSON.parse(s.handleLine(JSON.stringify({ type: "hello", protocol: 1 })) as string);
}

function predictLine(id: number, input: object): string {
  return JSON.stringify({ type: "predict", id, input });
}

describe("session", () => {
  it("answers hello with ready", () => {
    expect(handshake(fresh())).toEqual({ type: "ready", n_classes: 2, accepts: "graph" });
  });

  it("predicts with the request id echoed", () => {
    const s = fresh();
    handshake(s);
    const out = JSON.parse(s.handleLine(predictLine(7, toWire(wheel(8)))) as string);
    expect(out).toEqual({ type: "prediction", id: 7, probs: [0.05, 0.95] });
    const neg = JSON.parse(s.handleLine(predictLine(8, toWire(cycle(6)))) as string);
    expect(neg.probs).toEqual([0.95, 0.05]);
  });

  it("rejects predict before hello but keeps serving", () => {
    const s = fresh();
    const out = JSON.parse(s.handleLine(predictLine(0, toWire(wheel(6)))) as string);
    expect(out).toEqual({ type: "error", id: 0, message: "handshake required before predict" });
    handshake(s);
    expect(JSON.parse(s.handleLine(predictLine(1, toWire(wheel(6)))) as string).type).toBe(
      "prediction",
    );
  });

  it("rejects an unsupported protocol number, then a correct hello works", () => {
    const s = fresh();
    const out = JSON.parse(s.handleLine(JSON.stringify({ type: "hello", protocol: 2 })) as string);
    expect(out.type).toBe("error");
    expect(out.id).toBeNull();
    expect(handshake(s)).toMatchObject({ type: "ready" });
  });

  it("survives garbage lines", () => {
    const s = fresh();
    handshake(s);
    const bad = JSON.parse(s.handleLine("{not json") as string);
    expect(bad).toEqual({ type: "error", id: null, message: "unparseable JSON line" });
    const scalar = JSON.parse(s.handleLine("5") as string);
    expect(scalar.message).toMatch(/JSON object/);
    expect(JSON.parse(s.handleLine(predictLine(2, toWire(wheel(6)))) as string).type).toBe(
      "prediction",
    );
  });

  it("maps a malformed input to an error with the matching id", () => {
    const s = fresh();
    handshake(s);
    const out = JSON.parse(
      s.handleLine(JSON.stringify({ type: "predict", id: 3, input: { num_nodes: -1 } })) as string,
    );
    expect(out.type).toBe("error");
    expect(out.id).toBe(3);
    expect(out.message).toMatch(/num_nodes/);
    expect(JSON.parse(s.handleLine(predictLine(4, toWire(wheel(6)))) as string).id).toBe(4);
  });

  it("requires an integer id on predict", () => {
    const s = fresh();
    handshake(s);
    const out = JSON.parse(
      s.handleLine(JSON.stringify({ type: "predict", id: "x", input: toWire(wheel(6)) })) as string,
    );
    expect(out).toMatchObject({ type: "error", id: null });
  });

  it("flags unknown request types and ignores blank lines", () => {
    const s = fresh();
    expect(s.handleLine("   ")).toBeNull();
    const out = JSON.parse(s.handleLine(JSON.stringify({ type: "train", id: 9 })) as string);
    expect(out).toMatchObject({ type: "error", id: 9 });
    expect(out.message).toMatch(/unknown request type/);
  });
});
