/**
 * Transports: line-framed sessions over stdio or a TCP socket.
 */

import net from "node:net";
import readline from "node:readline";
import { ServedModel } from "./models.js";
import { Session } from "./protocol.js";

/** Serve stdin/stdout until EOF. */
export function serveStdio(model: ServedModel): Promise<void> {
  return new Promise((resolve) => {
    const session = new Session(model);
    const rl = readline.createInterface({ input: process.stdin, terminal: false });
    rl.on("line", (line) => {
      const out = session.handleLine(line);
      if (out !== null) process.stdout.write(out + "\n");
    });
    rl.on("close", resolve);
  });
}

/**
 * Listen and serve one connection at a time; extra connections are
 * dropped immediately rather than queued, and each accepted connection
 * gets a fresh session.  Resolves once the listener is bound (use port 0
 * for an ephemeral port and read it back from server.address()).
 */
export function serveTcp(model: ServedModel, host: string, port: number): Promise<net.Server> {
  let busy = false;
  const server = net.createServer((socket) => {
    if (busy) {
      socket.destroy();
      return;
    }
    busy = true;
    const session = new Session(model);
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      const out = session.handleLine(line);
      if (out !== null && socket.writable) socket.write(out + "\n");
    });
    socket.on("error", () => socket.destroy());
    socket.on("close", () => {
      busy = false;
    });
  });
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => resolve(server));
  });
}
