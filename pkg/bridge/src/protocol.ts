/**
 * Transport-independent protocol session.
 *
 * One JSON object per line.  The client opens with
 *   {"type": "hello", "protocol": 1}
 * and gets {"type": "ready", "n_classes": K, "accepts": "graph"|"series"};
 * each {"type": "predict", "id": i, "input": ...} gets a prediction or an
 * error carrying the same id.  A malformed line gets an error with a null
 * id.  Nothing here closes the connection: the transport decides that.
 */

import { ServedModel } from "./models.js";

export const PROTOCOL_VERSION = 1;

function errLine(id: number | null, message: string): string {
  return JSON.stringify({ type: "error", id, message });
}

function intId(raw: unknown): number | null {
  return typeof raw === "number" && Number.isInteger(raw) ? raw : null;
}

export class Session {
  private ready = false;

  constructor(private readonly model: ServedModel) {}

  /** Response line for one request line, or null for a blank line. */
  handleLine(line: string): string | null {
    const trimmed = line.trim();
    if (!trimmed) return null;
    let msg: unknown;
    try {
      msg = JSON.parse(trimmed);
    } catch {
      return errLine(null, "unparseable JSON line");
    }
    if (typeof msg !== "object" || msg === null || Array.isArray(msg)) {
      return errLine(null, "request must be a JSON object");
    }
    const req = msg as Record<string, unknown>;
    switch (req["type"]) {
      case "hello": {
        if (req["protocol"] !== PROTOCOL_VERSION) {
          return errLine(null, `unsupported protocol: ${JSON.stringify(req["protocol"])}`);
        }
        this.ready = true;
        return JSON.stringify({
          type: "ready",
          n_classes: this.model.nClasses,
          accepts: this.model.accepts,
        });
      }
      case "predict": {
        const id = intId(req["id"]);
        if (id === null) {
          return errLine(null, "predict requires an integer id");
        }
        if (!this.ready) {
          return errLine(id, "handshake required before predict");
        }
        try {
          const probs = this.model.predict(req["input"]);
          return JSON.stringify({ type: "prediction", id, probs });
        } catch (e) {
          return errLine(id, e instanceof Error ? e.message : String(e));
        }
      }
      default:
        return errLine(intId(req["id"]), `unknown request type: ${JSON.stringify(req["type"])}`);
    }
  }
}
