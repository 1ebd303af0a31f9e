import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import http from "node:http";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { IwpClient } from "../src/api.js";
import { AvatarOverlay } from "../src/avatar/overlay.js";
import { ConsoleApp } from "../src/console/app.js";
import { cybersafetyOption, parentalOption } from "../src/console/optionEditor.js";

/**
 * End-to-end tests against the real home-proxy stack (Python), reached only
 * through its HTTP API — exactly how the shipped UIs consume it.
 */

interface StackInfo {
  iwp_url: string;
  proxy_port: number;
  osn_host: string;
  meme_b64: string;
  replacement_b64: string;
}

let proc: ChildProcessWithoutNullStreams;
let stack: StackInfo;

function startStack(): Promise<StackInfo> {
  const harness = path.join(path.dirname(fileURLToPath(import.meta.url)), "harness", "stack.py");
  proc = spawn("python3", [harness], { stdio: ["pipe", "pipe", "pipe"] });
  return new Promise((resolve, reject) => {
    let out = "";
    proc.stdout.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const newline = out.indexOf("\n");
      if (newline >= 0) {
        resolve(JSON.parse(out.slice(0, newline)) as StackInfo);
      }
    });
    proc.on("error", reject);
    proc.on("exit", (code) => reject(new Error(`harness exited early (${code})`)));
    setTimeout(() => reject(new Error("harness start timeout")), 30_000);
  });
}

/** Fetch a URL of the intercepted OSN through the proxy (absolute-URI form). */
function viaProxy(urlPath: string): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const req = http.request(
      {
        host: "127.0.0.1",
        port: stack.proxy_port,
        path: `http://${stack.osn_host}${urlPath}`,
        headers: { Host: stack.osn_host },
      },
      (res) => {
        const chunks: Buffer[] = [];
        res.on("data", (c: Buffer) => chunks.push(c));
        res.on("end", () => resolve(Buffer.concat(chunks)));
      },
    );
    req.on("error", reject);
    req.end();
  });
}

beforeAll(async () => {
  stack = await startStack();
});

afterAll(() => {
  proc?.stdin.end();
  proc?.kill("SIGTERM");
});

describe("avatar against the live stack", () => {
  it("consent approve activates the policy within one stream event", async () => {
    const client = new IwpClient(stack.iwp_url);
    const root = document.createElement("div");
    document.body.appendChild(root);

    const overlay = new AvatarOverlay(client, "child-1", document, {
      heartbeatIntervalMs: 5_000,
    });
    let eventsSeen = 0;
    const origHandle = overlay.handleEvent.bind(overlay);
    overlay.handleEvent = (ev) => {
      eventsSeen += 1;
      origHandle(ev);
    };
    overlay.attach();
    await vi.waitFor(() => {
      // summary rendered => stream and policy snapshot are up
      expect(overlay.container.querySelector(".visibility-summary")!.textContent).not.toBe("");
    });

    const consoleApp = new ConsoleApp(client, "parent-1", root, {
      streamFactory: () => ({ close() {} }),
    });
    await consoleApp.start();
    expect(consoleApp.currentPolicy()!.parental.level).toBe("L1");

    const recordId = await consoleApp.editor.submit(parentalOption("L2", ["fb_wall"]));
    expect(recordId).not.toBeNull();
    expect(consoleApp.editor.badgeText).toBe("pending child approval");

    // the consent request arrives on the child's push stream
    await vi.waitFor(
      () => expect(overlay.container.querySelector(".consent-dialog")).not.toBeNull(),
      { timeout: 10_000 },
    );
    const eventsAtDialog = eventsSeen;

    const decided = new Promise<void>((resolve) => {
      overlay.container.addEventListener("consent-decided", () => resolve(), { once: true });
    });
    (overlay.container.querySelector(".consent-approve") as HTMLButtonElement).click();
    await decided;

    // active with no further stream events consumed beyond the request itself
    expect(eventsSeen).toBe(eventsAtDialog);
    const policy = await consoleApp.refreshPolicy();
    expect(policy.parental.level).toBe("L2");
    expect(policy.parental.l2_selections).toEqual(["fb_wall"]);
    expect(consoleApp.editor.badgeText).toBe("active");

    overlay.destroy();
    consoleApp.stop();
  });

  it("removing the overlay does not disable replace enforcement", async () => {
    const client = new IwpClient(stack.iwp_url);
    const meme = Buffer.from(stack.meme_b64, "base64");
    const replacement = Buffer.from(stack.replacement_b64, "base64");

    // enable enforcement through the consent handshake, driven by the UIs
    const overlay = new AvatarOverlay(client, "child-1", document, {
      heartbeatIntervalMs: 5_000,
    });
    overlay.attach();
    const { record_id } = await client.proposeOption(
      "parent-1",
      cybersafetyOption("L2", ["hateful_meme"]),
    );
    await vi.waitFor(
      () =>
        expect(
          overlay.container.querySelector(`.consent-dialog[data-record-id="${record_id}"]`),
        ).not.toBeNull(),
      { timeout: 10_000 },
    );
    const decided = new Promise<void>((resolve) => {
      overlay.container.addEventListener("consent-decided", () => resolve(), { once: true });
    });
    (
      overlay.container.querySelector(
        `.consent-dialog[data-record-id="${record_id}"] .consent-approve`,
      ) as HTMLButtonElement
    ).click();
    await decided;

    // with the overlay attached, the blocklisted meme is replaced
    await viaProxy("/feed");
    const bodyWithOverlay = await viaProxy("/img/meme.png");
    expect(bodyWithOverlay.equals(replacement)).toBe(true);

    // remove the overlay entirely: no DOM, no heartbeats, no stream
    overlay.destroy();
    expect(document.getElementById("cfas-avatar")).toBeNull();

    // enforcement is server-side — the replacement still happens
    await viaProxy("/feed");
    const bodyWithoutOverlay = await viaProxy("/img/meme.png");
    expect(bodyWithoutOverlay.equals(replacement)).toBe(true);
    expect(bodyWithoutOverlay.equals(meme)).toBe(false);
  });
});
