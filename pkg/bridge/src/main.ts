#!/usr/bin/env node
import net from "node:net";
import process from "node:process";
import { ServedModel, resolveModel } from "./models.js";
import { serveStdio, serveTcp } from "./server.js";

const USAGE =
  "usage: model-bridge [--transport stdio|tcp] [--model mock:hub|mock:constant] [--host H] [--port N]";

interface Options {
  transport: "stdio" | "tcp";
  model: string;
  host: string;
  port: number;
}

function parseArgs(argv: string[]): Options {
  const opts: Options = { transport: "stdio", model: "mock:hub", host: "127.0.0.1", port: 5577 };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = (): string => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${flag}`);
      return argv[++i];
    };
    if (flag === "--transport") {
      const t = next();
      if (t !== "stdio" && t !== "tcp") throw new Error(`unknown transport: ${t}`);
      opts.transport = t;
    } else if (flag === "--model") {
      opts.model = next();
    } else if (flag === "--host") {
      opts.host = next();
    } else if (flag === "--port") {
      opts.port = Number(next());
      if (!Number.isInteger(opts.port) || opts.port < 0 || opts.port > 65535) {
        throw new Error(`bad port: ${argv[i]}`);
      }
    } else if (flag === "--help" || flag === "-h") {
      process.stdout.write(USAGE + "\n");
      process.exit(0);
    } else {
      throw new Error(`unknown flag: ${flag}`);
    }
  }
  return opts;
}

async function main(): Promise<void> {
  let opts: Options;
  let model: ServedModel;
  try {
    opts = parseArgs(process.argv.slice(2));
    model = resolveModel(opts.model);
  } catch (e) {
    process.stderr.write(`${e instanceof Error ? e.message : String(e)}\n${USAGE}\n`);
    process.exit(2);
  }
  if (opts.transport === "stdio") {
    await serveStdio(model);
    return;
  }
  const server = await serveTcp(model, opts.host, opts.port);
  const addr = server.address() as net.AddressInfo;
  process.stderr.write(`listening on ${addr.address}:${addr.port}\n`);
  const stop = (): void => {
    server.close(() => process.exit(0));
  };
  process.on("SIGINT", stop);
  process.on("SIGTERM", stop);
}

void main();
