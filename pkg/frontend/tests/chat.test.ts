import { describe, expect, it } from "vitest";
import { ChatSession } from "../src/chat.js";
import { EdgeApiError } from "../src/api.js";
import type { QueryResponse } from "../src/types.js";
import { fakeEdge, makeDiagnosis } from "./fakes.js";

function reply(question: string): QueryResponse {
  return {
    obs_id: "obs-7",
    prompt_text: "Current sensor data: pH=5.7, ...",
    question,
    answer: "Diagnosis: leaf_blight (confidence 0.90).",
    diagnosis: makeDiagnosis(),
    class_name: "leaf_blight",
  };
}

function recordingEdge(
  query: (text: string, obsId?: string) => Promise<QueryResponse>,
) {
  const calls: Array<[string, string | undefined]> = [];
  const api = fakeEdge({
    query(text, obsId) {
      calls.push([text, obsId]);
      return query(text, obsId);
    },
  });
  return { api, calls };
}

describe("ChatSession", () => {
  it("commits a user and an assistant turn on success", async () => {
    const { api } = recordingEdge(async (text) => reply(text));
    const chat = new ChatSession(api);
    const answer = await chat.ask("what is wrong?");
    expect(answer.class_name).toBe("leaf_blight");
    expect(chat.transcript).toHaveLength(2);
    expect(chat.transcript[0]).toMatchObject({
      role: "user",
      text: "what is wrong?",
    });
    expect(chat.transcript[1]).toMatchObject({
      role: "assistant",
      text: answer.answer,
      promptText: answer.prompt_text,
    });
  });

  it("carries the observation context into follow-up questions", async () => {
    const { api, calls } = recordingEdge(async (text) => reply(text));
    const chat = new ChatSession(api);
    expect(chat.obsId).toBeUndefined();
    await chat.ask("first question"); // server answers against obs-7
    expect(chat.obsId).toBe("obs-7");
    await chat.ask("and what should I do?");
    expect(calls).toEqual([
      ["first question", undefined],
      ["and what should I do?", "obs-7"],
    ]);
  });

  it("focus() pins the conversation to an alert's observation", async () => {
    const { api, calls } = recordingEdge(async (text) => reply(text));
    const chat = new ChatSession(api);
    chat.focus("obs-42");
    await chat.ask("is this bad?");
    expect(calls[0]).toEqual(["is this bad?", "obs-42"]);
  });

  it("leaves the transcript untouched when the request fails", async () => {
    const { api } = recordingEdge(async () => {
      throw new EdgeApiError(400, "bad_request", "field 'text' must be ...");
    });
    const chat = new ChatSession(api);
    await expect(chat.ask("bad question")).rejects.toThrow(EdgeApiError);
    expect(chat.transcript).toHaveLength(0);
    expect(chat.obsId).toBeUndefined();
  });

  it("rethrows not-ready so the UI can show a message", async () => {
    const { api } = recordingEdge(async () => {
      throw new EdgeApiError(503, "not_ready", "no model loaded");
    });
    const chat = new ChatSession(api);
    await expect(chat.ask("anyone home?")).rejects.toMatchObject({
      status: 503,
      code: "not_ready",
    });
    expect(chat.transcript).toHaveLength(0);
  });
});
