"""Talk to an answer-probability oracle over the wire protocol.

Starts a miniature in-process server implementing the three endpoints
(/v1/logprob, /v1/answer, /v1/health) backed by the synthetic oracle, then
drives it with the remote client, including a repeat-gain scan.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from repeatgain import (
    RemoteOracle,
    SyntheticOracleSpec,
    generate_synthetic_dataset,
    scan_repeat_gains,
)

spec = SyntheticOracleSpec(seed=21, n_frames=8, dim=32, n_key_frames=3)
dataset = generate_synthetic_dataset(spec, 2)
backing = dataset.oracle()


class Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _reply(self, doc, code=200):
        body = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self._reply({"oracle_id": backing.oracle_id, "model_name": "synthetic-demo"})

    def do_POST(self):
        payload = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path == "/v1/logprob":
            value = backing.logprob(
                payload["sample_id"], payload["sequence"], payload["answer_id"]
            )
            self._reply({"logprob": value})
        elif self.path == "/v1/answer":
            value = backing.sample_answer(
                payload["sample_id"], payload["sequence"], payload["temperature"]
            )
            self._reply({"answer_id": value})
        else:
            self._reply({"error": "no such route"}, code=404)


server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
threading.Thread(target=server.serve_forever, daemon=True).start()
endpoint = f"http://127.0.0.1:{server.server_port}"
print("serving on", endpoint)

client = RemoteOracle(endpoint, in_flight_budget=2)
print("health:", client.health())

sample = dataset.samples[0]
lp = client.logprob(sample.sample_id, list(range(sample.n_frames)), sample.answer_id)
print(f"baseline logprob over the wire: {lp:.4f}")

record = scan_repeat_gains(sample, range(sample.n_frames), client, max_in_flight=2)
print("gains via remote scan:", [round(e.gain, 4) for e in record.entries])
print("matches local oracle: ", record.baseline_logprob == dataset.truth[sample.sample_id].base_logprob)

server.shutdown()
