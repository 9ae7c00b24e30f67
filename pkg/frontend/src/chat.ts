import type { EdgeApi } from "./api.js";
import type { QueryResponse } from "./types.js";

export interface ChatTurn {
  role: "user" | "assistant";
  text: string;
  /** Observation the turn was answered against, if any. */
  obsId?: string;
  /** Exact prompt the model saw, shown for assistant turns. */
  promptText?: string;
}

/**
 * Chat transcript over the edge's diagnosis endpoint.
 *
 * The session remembers which observation the conversation is about:
 * the first answer pins obs_id, and follow-up questions are sent with
 * that id so "what should I do about it?" means the same plant. A
 * failed request (model not loaded, malformed input) leaves the
 * transcript exactly as it was; the error is rethrown for the caller
 * to surface.
 */
export class ChatSession {
  readonly transcript: ChatTurn[] = [];
  private contextObsId: string | undefined;

  constructor(private readonly client: EdgeApi) {}

  get obsId(): string | undefined {
    return this.contextObsId;
  }

  /** Pin the conversation to a specific observation (e.g. from an alert). */
  focus(obsId: string): void {
    this.contextObsId = obsId;
  }

  async ask(question: string): Promise<QueryResponse> {
    const reply = await this.client.query(question, this.contextObsId);
    // only a successful round trip mutates the transcript
    this.contextObsId = reply.obs_id;
    this.transcript.push({ role: "user", text: question, obsId: reply.obs_id });
    this.transcript.push({
      role: "assistant",
      text: reply.answer,
      obsId: reply.obs_id,
      promptText: reply.prompt_text,
    });
    return reply;
  }
}
