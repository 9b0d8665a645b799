/** Operator control channel: newline-delimited JSON over local TCP. */

import * as net from "node:net";

export interface ControlResponse {
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

export function sendControlEvent(
  host: string,
  port: number,
  event: Record<string, unknown>,
  timeoutMs = 5000,
): Promise<ControlResponse> {
  return new Promise((resolve, reject) => {
    const socket = net.createConnection({ host, port });
    let buffer = "";
    const timer = setTimeout(() => {
      socket.destroy();
      reject(new Error("control request timed out"));
    }, timeoutMs);
    socket.on("connect", () => {
      socket.write(JSON.stringify(event) + "\n");
    });
    socket.on("data", (chunk) => {
      buffer += chunk.toString("utf8");
      const idx = buffer.indexOf("\n");
      if (idx >= 0) {
        clearTimeout(timer);
        socket.end();
        try {
          const response = JSON.parse(buffer.slice(0, idx)) as ControlResponse;
          if (!response.ok) {
            reject(new Error(`control request failed: ${response.error ?? "unknown"}`));
          } else {
            resolve(response);
          }
        } catch (err) {
          reject(err);
        }
      }
    });
    socket.on("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
  });
}

export function requestControl(host: string, port: number, mode: string): Promise<ControlResponse> {
  return sendControlEvent(host, port, { event: "request_control", mode });
}

export function releaseControl(host: string, port: number): Promise<ControlResponse> {
  return sendControlEvent(host, port, { event: "release_control" });
}
