import { ApiError, IwpClient } from "../api.js";
import type { Level, OptionDoc, PolicyView } from "../types.js";

export const PARENTAL_L2_CLASSES = [
  "twitter_profiles",
  "youtube_videos",
  "fb_wall",
  "fb_photos",
  "fb_friends",
] as const;

export const BACKEND_L2_CLASSES = ["child_wall", "friends_wall", "friends_profiles"] as const;

export const ALL_MECHANISMS = [
  "grooming",
  "cyberbullying",
  "distress",
  "fake_activity",
  "pii_exposure",
  "hateful_meme",
  "disturbing_video",
  "sensitive_image",
  "abusive_account",
  "bot_account",
] as const;

export function parentalOption(level: Level, selections: string[] = []): OptionDoc {
  return { kind: "parental", parental: { level, l2_selections: selections } };
}

export function backendOption(
  level: Level,
  selections: string[] = [],
  anonymize = true,
): OptionDoc {
  return { kind: "backend", backend: { level, l2_selections: selections, anonymize } };
}

export function cybersafetyOption(level: Level, enforce: string[] = []): OptionDoc {
  return {
    kind: "cybersafety",
    cybersafety: {
      level,
      enabled_mechanisms: [...ALL_MECHANISMS],
      enforce_mechanisms: enforce,
    },
  };
}

/**
 * Proposal form for one visibility/cybersafety option. Submission goes to
 * POST /policy/options; an API rejection is surfaced inline, and an accepted
 * proposal shows a "pending child approval" badge until the policy snapshot
 * reports the consent resolved.
 */
export class OptionEditor {
  readonly root: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly badgeEl: HTMLElement;
  private pendingRecordId: string | null = null;

  constructor(
    private readonly client: IwpClient,
    private readonly custodianId: string,
    doc: Document,
  ) {
    this.root = doc.createElement("section");
    this.root.className = "option-editor";
    this.errorEl = doc.createElement("p");
    this.errorEl.className = "option-error";
    this.errorEl.hidden = true;
    this.badgeEl = doc.createElement("span");
    this.badgeEl.className = "consent-badge";
    this.badgeEl.hidden = true;
    this.root.append(this.errorEl, this.badgeEl);
  }

  get errorText(): string {
    return this.errorEl.hidden ? "" : (this.errorEl.textContent ?? "");
  }

  get badgeText(): string {
    return this.badgeEl.hidden ? "" : (this.badgeEl.textContent ?? "");
  }

  async submit(option: OptionDoc): Promise<string | null> {
    this.errorEl.hidden = true;
    this.errorEl.textContent = "";
    try {
      const { record_id } = await this.client.proposeOption(this.custodianId, option);
      this.pendingRecordId = record_id;
      this.badgeEl.textContent = "pending child approval";
      this.badgeEl.dataset.state = "pending";
      this.badgeEl.hidden = false;
      return record_id;
    } catch (err) {
      this.errorEl.textContent =
        err instanceof ApiError ? err.detail : "could not reach the home proxy";
      this.errorEl.hidden = false;
      return null;
    }
  }

  /** Flip the pending badge from the latest policy snapshot (no reload). */
  reflectPolicy(policy: PolicyView): void {
    if (!this.pendingRecordId) {
      return;
    }
    const record = policy.consents.find((c) => c.record_id === this.pendingRecordId);
    if (!record || record.state === "pending") {
      return;
    }
    this.badgeEl.textContent = record.state === "approved" ? "active" : record.state;
    this.badgeEl.dataset.state = record.state;
    this.badgeEl.hidden = false;
    this.pendingRecordId = null;
  }
}
