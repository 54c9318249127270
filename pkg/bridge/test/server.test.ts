import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import net from "node:net";
import path from "node:path";
import readline from "node:readline";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { hubModel } from "../src/models.js";
import { serveTcp } from "../src/server.js";
import { cycle, toWire, wheel } from "./helpers.js";

const MAIN = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "dist", "main.js");

type NextLine = () => Promise<string>;

function lineReader(input: NodeJS.ReadableStream): NextLine {
  const queued: string[] = [];
  const waiters: Array<(line: string) => void> = [];
  readline.createInterface({ input, terminal: false }).on("line", (line) => {
    const w = waiters.shift();
    if (w) w(line);
    else queued.push(line);
  });
  return () =>
    new Promise<string>((resolve, reject) => {
      const ready = queued.shift();
      if (ready !== undefined) {
        resolve(ready);
        return;
      }
      waiters.push(resolve);
      setTimeout(() => reject(new Error("timed out waiting for a line")), 5000);
    });
}

function exited(child: ChildProcessWithoutNullStreams): Promise<number | null> {
  return new Promise((resolve) => child.on("close", (code) => resolve(code)));
}

function launch(...args: string[]): ChildProcessWithoutNullStreams {
  return spawn(process.execPath, [MAIN, ...args], { stdio: ["pipe", "pipe", "pipe"] });
}

describe("stdio transport", () => {
  it("serves hub predictions end to end and exits on EOF", async () => {
    const child = launch("--transport", "stdio", "--model", "mock:hub");
    const next = lineReader(child.stdout);
    child.stdin.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
    expect(JSON.parse(await next())).toEqual({ type: "ready", n_classes: 2, accepts: "graph" });

    child.stdin.write(JSON.stringify({ type: "predict", id: 0, input: toWire(wheel(9)) }) + "\n");
    child.stdin.write("][ not json\n");
    child.stdin.write(JSON.stringify({ type: "predict", id: 1, input: toWire(cycle(7)) }) + "\n");
    expect(JSON.parse(await next())).toEqual({ type: "prediction", id: 0, probs: [0.05, 0.95] });
    expect(JSON.parse(await next())).toMatchObject({ type: "error", id: null });
    expect(JSON.parse(await next())).toEqual({ type: "prediction", id: 1, probs: [0.95, 0.05] });

    child.stdin.end();
    expect(await exited(child)).toBe(0);
  }, 10000);

  it("defaults to stdio with the hub mock", async () => {
    const child = launch();
    const next = lineReader(child.stdout);
    child.stdin.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
    expect(JSON.parse(await next())).toMatchObject({ type: "ready", accepts: "graph" });
    child.stdin.end();
    await exited(child);
  }, 10000);

  it("serves the constant mock", async () => {
    const child = launch("--model", "mock:constant");
    const next = lineReader(child.stdout);
    child.stdin.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
    await next();
    child.stdin.write(JSON.stringify({ type: "predict", id: 5, input: toWire(wheel(6)) }) + "\n");
    child.stdin.write(JSON.stringify({ type: "predict", id: 6, input: toWire(cycle(5)) }) + "\n");
    const a = JSON.parse(await next());
    const b = JSON.parse(await next());
    expect(a.probs).toEqual([0.5, 0.5]);
    expect(a.probs).toEqual(b.probs);
    child.stdin.end();
    await exited(child);
  }, 10000);

  it("exits 2 on bad flags or an unknown model", async () => {
    const badFlag = launch("--transport", "carrier-pigeon");
    expect(await exited(badFlag)).toBe(2);
    const badModel = launch("--model", "mock:nope");
    expect(await exited(badModel)).toBe(2);
  }, 10000);
});

describe("tcp transport", () => {
  async function connect(port: number): Promise<{ socket: net.Socket; next: NextLine }> {
    const socket = net.connect(port, "127.0.0.1");
    await new Promise<void>((resolve, reject) => {
      socket.once("connect", resolve);
      socket.once("error", reject);
    });
    return { socket, next: lineReader(socket) };
  }

  it("serves one connection at a time and recycles after close", async () => {
    const server = await serveTcp(hubModel(), "127.0.0.1", 0);
    const port = (server.address() as net.AddressInfo).port;
    try {
      const a = await connect(port);
      a.socket.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
      expect(JSON.parse(await a.next())).toMatchObject({ type: "ready", n_classes: 2 });
      a.socket.write(JSON.stringify({ type: "predict", id: 0, input: toWire(wheel(12)) }) + "\n");
      expect(JSON.parse(await a.next())).toEqual({
        type: "prediction",
        id: 0,
        probs: [0.05, 0.95],
      });

      // a second connection is turned away while the first is live
      const b = await connect(port);
      await new Promise<void>((resolve) => b.socket.once("close", () => resolve()));

      a.socket.end();
      await new Promise<void>((resolve) => a.socket.once("close", () => resolve()));

      const c = await connect(port);
      c.socket.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
      expect(JSON.parse(await c.next())).toMatchObject({ type: "ready" });
      c.socket.end();
    } finally {
      server.close();
    }
  }, 10000);

  it("announces the bound port on stderr when spawned with --port 0", async () => {
    const child = launch("--transport", "tcp", "--port", "0");
    const errLine = lineReader(child.stderr);
    const banner = await errLine();
    const match = banner.match(/listening on 127\.0\.0\.1:(\d+)/);
    expect(match).not.toBeNull();
    const port = Number(match![1]);
    const { socket, next } = await connect(port);
    socket.write(JSON.stringify({ type: "hello", protocol: 1 }) + "\n");
    expect(JSON.parse(await next())).toMatchObject({ type: "ready" });
    socket.end();
    child.kill("SIGTERM");
    expect(await exited(child)).toBe(0);
  }, 10000);
});
