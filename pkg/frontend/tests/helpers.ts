import { ChildProcess, spawn } from "node:child_process";

export interface ServerHandle {
  proc: ChildProcess;
  port: number;
  controlPort: number;
  done: Promise<number | null>;
}

const PYTHON = process.env.LBR_KIT_PYTHON ?? "python3";

/** Spawn the controller simulator in deterministic lockstep, one session. */
export function spawnLockstepServer(extraArgs: string[] = []): Promise<ServerHandle> {
  return new Promise((resolve, reject) => {
    const proc = spawn(
      PYTHON,
      ["-m", "lbr_kit.cli", "serve", "--deterministic", "--once", "--port", "0", "--control-port", "0", ...extraArgs],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    let out = "";
    const timer = setTimeout(() => {
      proc.kill();
      reject(new Error(`server did not announce its ports; output: ${out}`));
    }, 15000);
    proc.stdout!.on("data", (chunk) => {
      out += chunk.toString("utf8");
      const match = out.match(/listening udp=(\d+) control=(\d+)/);
      if (match) {
        clearTimeout(timer);
        const done = new Promise<number | null>((res) => proc.on("exit", (code) => res(code)));
        resolve({ proc, port: Number(match[1]), controlPort: Number(match[2]), done });
      }
    });
    proc.on("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
    proc.on("exit", (code) => {
      if (!out.includes("listening")) {
        clearTimeout(timer);
        reject(new Error(`server exited early with code ${code}: ${out}`));
      }
    });
  });
}

/** Run the native CLI demo against a server; returns its exit code. */
export function runNativeDemo(args: string[]): Promise<number | null> {
  return new Promise((resolve, reject) => {
    const proc = spawn(PYTHON, ["-m", "lbr_kit.cli", "demo", ...args], {
      stdio: ["ignore", "ignore", "pipe"],
    });
    let err = "";
    proc.stderr!.on("data", (chunk) => (err += chunk.toString("utf8")));
    proc.on("exit", (code) => {
      if (code !== 0) {
        reject(new Error(`native demo exited ${code}: ${err}`));
      } else {
        resolve(code);
      }
    });
    proc.on("error", reject);
  });
}
