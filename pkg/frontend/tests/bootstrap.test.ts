// @vitest-environment happy-dom
//
// Wiring test for the browser bootstrap: a stubbed fetch stands in for
// the edge, and the assertions read the rendered DOM the way an
// operator would.
import { afterEach, describe, expect, it, vi } from "vitest";
import { bootstrap } from "../src/main.js";
import type { CommandRecord } from "../src/types.js";
import { makeAlert, makeCommand, makeDiagnosis } from "./fakes.js";

const EDGE = "http://edge:9";

function jsonResponse(doc: unknown): Response {
  return {
    ok: true,
    status: 200,
    json: async () => doc,
  } as unknown as Response;
}

function sseResponse(events: string[]): Response {
  const encoder = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const ev of events) {
        controller.enqueue(encoder.encode(ev));
      }
      // held open: the stream stays live for the whole test
    },
  });
  return { ok: true, status: 200, body } as unknown as Response;
}

/** A fake edge with one alert, its observation, and one pending command. */
function fakeEdgeServer() {
  const alert = makeAlert("a1", 1700000000000);
  let command: CommandRecord = makeCommand("c1", "pending");
  const detail = {
    observation: {
      obs_id: alert.obs_id,
      image: { width: 2, height: 2, pixels: [0, 0.25, 0.5, 1] },
      sensors: {
        ph: 5.7,
        temperature_c: 21.0,
        humidity_pct: 60.0,
        light_klux: 12.0,
        timestamp_ms: 99,
        sensor_id: "sensor-0",
      },
      location: { lat: 43.1, lon: -89.4 },
      label: null,
    },
    diagnosis: makeDiagnosis(),
  };

  const fetchStub = vi.fn(async (url: string, init?: RequestInit) => {
    const path = url.slice(EDGE.length).split("?")[0] ?? "";
    if (path === "/v1/events") {
      return sseResponse([
        ": connected\n\n",
        `event: alert\ndata: ${JSON.stringify(alert)}\n\n`,
      ]);
    }
    if (path === "/v1/status") {
      return jsonResponse({
        edge_id: "edge-dom",
        model_version: "abcd1234abcd1234",
        model_stage: "final",
        queue_depth: 0,
        buffered_records: 1,
        acked_records: 1,
        alerts_total: 1,
        pending_commands: command.state === "pending" ? 1 : 0,
        session_id: null,
        last_sync_ms: 0,
      });
    }
    if (path === "/v1/alerts") {
      return jsonResponse({ alerts: [alert] });
    }
    if (path === "/v1/commands") {
      return jsonResponse({ commands: [command] });
    }
    if (path === `/v1/observations/${alert.obs_id}`) {
      return jsonResponse(detail);
    }
    if (path === "/v1/commands/c1/approve" && init?.method === "POST") {
      command = { ...command, state: "executed", decided_ms: 123 };
      return jsonResponse({ command });
    }
    if (path === "/v1/query" && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { text: string };
      return jsonResponse({
        obs_id: alert.obs_id,
        prompt_text: "Current sensor data: pH=5.7, ...",
        question: body.text,
        answer: "Diagnosis: leaf_blight (confidence 0.90).",
        diagnosis: makeDiagnosis(),
        class_name: "leaf_blight",
      });
    }
    throw new Error(`unstubbed route: ${init?.method ?? "GET"} ${path}`);
  });
  return { alert, fetchStub };
}

async function waitFor(cond: () => boolean, ms = 3000): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) {
      throw new Error("condition not met in time");
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

function pageSkeleton(): void {
  document.body.innerHTML = `
    <span id="edge-status"></span>
    <div id="feed-state"></div><div id="feed"></div>
    <div id="detail"></div>
    <div id="chat"></div>
    <form id="chat-form"><input id="chat-input"><button></button></form>
    <div id="commands"></div>
    <div id="toasts"></div>`;
}

describe("bootstrap", () => {
  let cleanup: (() => void) | null = null;

  afterEach(() => {
    cleanup?.();
    cleanup = null;
    vi.unstubAllGlobals();
  });

  it("renders feed, detail, chat and commands from live data", async () => {
    const { alert, fetchStub } = fakeEdgeServer();
    vi.stubGlobal("fetch", fetchStub);
    pageSkeleton();

    cleanup = bootstrap(document, EDGE);

    // first poll + push stream populate the page
    await waitFor(() => document.querySelectorAll(".alert-card").length === 1);
    await waitFor(() =>
      (document.getElementById("edge-status")?.textContent ?? "").includes(
        "edge-dom",
      ),
    );
    expect(document.querySelector(".alert-class")?.textContent).toBe(
      alert.class_name,
    );
    await waitFor(() =>
      (document.getElementById("feed-state")?.textContent ?? "").includes(
        "live",
      ),
    );

    // click the alert: observation image and sensors render client-side
    (document.querySelector(".alert-card") as HTMLElement).click();
    await waitFor(() => document.querySelectorAll(".px").length === 4);
    expect(document.querySelector(".sensor-panel")?.textContent).toContain(
      "5.70",
    );
    expect(document.querySelector(".diagnosis-class")?.textContent).toContain(
      alert.class_name,
    );

    // ask a question through the form; the transcript shows both turns
    const input = document.getElementById("chat-input") as HTMLInputElement;
    input.value = "what is wrong?";
    document
      .getElementById("chat-form")
      ?.dispatchEvent(new Event("submit", { cancelable: true }));
    await waitFor(() => document.querySelectorAll(".turn").length === 2);
    expect(document.querySelector(".turn-assistant")?.textContent).toContain(
      "Diagnosis: leaf_blight",
    );
    expect(input.value).toBe("");

    // approve the pending command from its rendered row
    await waitFor(() => document.querySelectorAll(".command-row").length === 1);
    (document.querySelector(".cmd-approve") as HTMLButtonElement).click();
    await waitFor(
      () =>
        document.querySelector(".command-state")?.textContent === "executed",
    );
    const approveCalls = fetchStub.mock.calls.filter(([url]) =>
      String(url).endsWith("/v1/commands/c1/approve"),
    );
    expect(approveCalls).toHaveLength(1);
  });

  it("fails loudly when the markup is missing an anchor element", () => {
    vi.stubGlobal("fetch", vi.fn());
    document.body.innerHTML = "<div id='feed'></div>"; // everything else absent
    expect(() => bootstrap(document, EDGE)).toThrow(/missing #/);
  });
});
