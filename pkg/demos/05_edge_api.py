"""
Talking to a live edge node
===========================

Boots a real edge runtime with its HTTP API on a loopback port, feeds it
a sick plant, and then does what an operator's dashboard would do: read
the alert, ask a question about the observation, and approve the
recommended command.  Everything below is plain HTTP + JSON.
"""

import json
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

from farmlight import distill, synthgen
from farmlight.edge import EdgeApiServer, EdgePolicy, EdgeRuntime
from farmlight.rng import Rng, derive_seed
from farmlight.simnet import LiveScheduler

# Train a quick student on a small split, then boot the node with it.
catalog, specs = synthgen.default_world()
train_rng = Rng(derive_seed(0, "demo/api-train"))
train = [synthgen.gen_observation(s, train_rng)
         for s in specs for _ in range(60)]
val = [synthgen.gen_observation(s, train_rng) for s in specs for _ in range(12)]
artifacts = Path(tempfile.mkdtemp(prefix="farmlight-api-"))
distill.run_pipeline(train, val, catalog, artifacts, seed=0)
scheduler = LiveScheduler()
runtime = EdgeRuntime(edge_id="edge-demo", policy=EdgePolicy(),
                      catalog=catalog, scheduler=scheduler, seed=0)
runtime.install_model((artifacts / "student_final.flsm").read_bytes())
api = EdgeApiServer(runtime, "127.0.0.1", 0)
api.start()
print(f"edge node up at {api.base_url}\n")


def http(method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(api.base_url + path, data=data,
                                 method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


# A grower's camera catches root rot (class 3, high urgency) and posts
# the observation to the node.
rng = Rng(derive_seed(0, "demo/api"))
sick = synthgen.gen_observation(specs[3], rng)
posted = http("POST", "/v1/observations", sick.to_dict())
print(f"POST /v1/observations         -> queued obs {posted['obs_id']}")

# The observation endpoint 404s until inference has run; poll it.
for _ in range(100):
    try:
        result = http("GET", f"/v1/observations/{posted['obs_id']}")
        break
    except urllib.error.HTTPError:
        time.sleep(0.05)
diagnosis = result["diagnosis"]
print(f"GET  /v1/observations/{{id}}    -> diagnosed "
      f"{catalog[diagnosis['predicted']].name} "
      f"({diagnosis['confidence']:.2f} confidence)")

status = http("GET", "/v1/status")
print(f"GET  /v1/status               -> model {status['model_version']}, "
      f"queue depth {status['queue_depth']}, "
      f"{status['alerts_total']} alert(s)")

# High urgency produced both an alert and a pending actuation command.
alerts = http("GET", "/v1/alerts")["alerts"]
alert = alerts[-1]
print(f"GET  /v1/alerts               -> {alert['class_name']} "
      f"(urgency {alert['urgency']}): {alert['recommendation']}")

answer = http("POST", "/v1/query",
              {"text": "what should I do?", "obs_id": posted["obs_id"]})
print(f"POST /v1/query                -> \"{answer['answer']}\"")

commands = http("GET", "/v1/commands")["commands"]
pending = [c for c in commands if c["state"] == "pending"][-1]
print(f"GET  /v1/commands             -> {pending['command_id']} pending: "
      f"{pending['action']}")

approved = http("POST", f"/v1/commands/{pending['command_id']}/approve")
print(f"POST .../approve              -> state {approved['command']['state']}")

api.stop()
runtime.stop()
scheduler.close()
print("\nnode shut down cleanly")
