import { describe, expect, it } from "vitest";

import { IwpClient } from "../src/api.js";
import { ConsoleApp } from "../src/console/app.js";
import { renderIncidentCard, renderLivenessCard } from "../src/console/incidents.js";
import { OptionEditor, cybersafetyOption, parentalOption } from "../src/console/optionEditor.js";
import type { IncidentNotification, StreamEvent } from "../src/types.js";
import { makePolicy, mockFetch } from "./helpers.js";

// Exact strings the server renders for each parental level (the console must
// echo them byte-for-byte, so the expected values are spelled out in full).
const SERVER_STRINGS = [
  "Casey might be a victim of cyberbullying.",
  "Casey might be a victim of cyberbullying by Eve",
  "Casey might be a victim of cyberbullying by Eve. Click here to see the suspicious chat",
  "Casey might be a victim of sexual grooming. Click here to see the suspicious chat",
];

function incident(text: string, extra: Partial<IncidentNotification> = {}): IncidentNotification {
  return { recipient: "custodian", text, evidence_access: "none", ...extra };
}

function newConsole(route?: Parameters<typeof mockFetch>[0]) {
  const { fetch, calls } = mockFetch(route ?? (() => [200, makePolicy()]));
  const client = new IwpClient("http://iwp.test", fetch);
  const root = document.createElement("div");
  document.body.appendChild(root);
  const app = new ConsoleApp(client, "parent-1", root, {
    streamFactory: () => ({ close() {} }),
  });
  return { app, calls };
}

describe("incident cards", () => {
  it("renders the pushed text byte-equal to the server string", async () => {
    const { app } = newConsole();
    await app.start();
    for (const text of SERVER_STRINGS) {
      app.handleEvent(incident(text));
    }
    const rendered = [...app.feed.querySelectorAll(".incident-text")].map(
      (el) => el.textContent ?? "",
    );
    rendered.reverse(); // the feed prepends newest-first
    expect(rendered).toHaveLength(SERVER_STRINGS.length);
    for (let i = 0; i < SERVER_STRINGS.length; i++) {
      // byte-equality, not just display equality
      expect(Buffer.from(rendered[i]!, "utf-8").equals(Buffer.from(SERVER_STRINGS[i]!, "utf-8"))).toBe(
        true,
      );
    }
  });

  it("never re-templates: odd punctuation and unicode survive verbatim", () => {
    const text = 'Casey might be a victim of "weird  spacing"… by Eve';
    const card = renderIncidentCard(incident(text), document);
    expect(card.querySelector(".incident-text")!.textContent).toBe(text);
  });

  it("shows the evidence link only when the server granted portions_link", () => {
    const withLink = renderIncidentCard(
      incident(SERVER_STRINGS[2]!, {
        evidence_access: "portions_link",
        evidence_url: "/notify/evidence/00000001-aaaa",
      }),
      document,
    );
    expect(withLink.querySelector(".evidence-link")).not.toBeNull();
    expect(withLink.querySelector<HTMLAnchorElement>(".evidence-link")!.getAttribute("href")).toBe(
      "/notify/evidence/00000001-aaaa",
    );

    for (const access of ["none", "names_only"] as const) {
      const card = renderIncidentCard(
        incident(SERVER_STRINGS[1]!, { evidence_access: access }),
        document,
      );
      expect(card.querySelector(".evidence-link")).toBeNull();
    }
  });

  it("never shows a link when portions_link arrives without a url", () => {
    const card = renderIncidentCard(
      incident(SERVER_STRINGS[2]!, { evidence_access: "portions_link" }),
      document,
    );
    expect(card.querySelector(".evidence-link")).toBeNull();
  });

  it("renders a liveness warning card for heartbeat events", async () => {
    const { app } = newConsole();
    await app.start();
    app.handleEvent({
      type: "heartbeat",
      member_id: "child-1",
      status: "unresponsive",
    } satisfies StreamEvent);
    const card = app.feed.querySelector(".liveness-card");
    expect(card).not.toBeNull();
    expect(card!.textContent).toContain("stopped responding");
    expect(renderLivenessCard(
      { type: "heartbeat", member_id: "child-1", status: "recovered" },
      document,
    ).textContent).toContain("responding again");
  });
});

describe("option editor", () => {
  it("surfaces the API rejection inline for Cybersafety L2 with an empty enforce set", async () => {
    const detail = "cybersafety L2 needs at least one enforced mechanism";
    const { fetch } = mockFetch((url) =>
      url.endsWith("/policy/options") ? [400, { error: detail }] : [200, makePolicy()],
    );
    const editor = new OptionEditor(new IwpClient("http://iwp.test", fetch), "parent-1", document);
    const recordId = await editor.submit(cybersafetyOption("L2", []));
    expect(recordId).toBeNull();
    expect(editor.errorText).toBe(detail);
    expect(editor.root.querySelector<HTMLElement>(".option-error")!.hidden).toBe(false);
  });

  it("shows a pending badge after a valid proposal and flips it to active on approval", async () => {
    let approved = false;
    const { fetch, calls } = mockFetch((url) => {
      if (url.endsWith("/policy/options")) {
        return [200, { record_id: "rec-1" }];
      }
      return [
        200,
        makePolicy({
          consents: [
            {
              record_id: "rec-1",
              option_kind: "parental",
              option: parentalOption("L2", ["fb_wall"]),
              proposed_by: "parent-1",
              state: approved ? "approved" : "pending",
              proposed_at: "2026-08-26T00:00:00Z",
              decided_at: approved ? "2026-08-26T00:01:00Z" : null,
              expires_at: null,
            },
          ],
        }),
      ];
    });
    const client = new IwpClient("http://iwp.test", fetch);
    const editor = new OptionEditor(client, "parent-1", document);

    await editor.submit(parentalOption("L2", ["fb_wall"]));
    expect(editor.errorText).toBe("");
    expect(editor.badgeText).toBe("pending child approval");

    editor.reflectPolicy(await client.getPolicy());
    expect(editor.badgeText).toBe("pending child approval"); // still pending

    approved = true;
    editor.reflectPolicy(await client.getPolicy()); // no reload: snapshot only
    expect(editor.badgeText).toBe("active");
    expect(calls.filter((c) => c.url.endsWith("/policy/options"))).toHaveLength(1);
  });
});
