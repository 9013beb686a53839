"""Scriptable wire-protocol worker for evaluator tests.

Behaviors, selected by argv[1]:
    ok          answer every request with top1 = 0.5 + id/1000
    latency     like ok, plus a measured_latency field
    garbage     reply with a non-JSON line
    wrong-id    reply with id + 1
    crash-on-2  exit(1) as soon as request id 2 arrives
    slow        sleep 10s before each reply
    no-ready    reply to the handshake with {"ready": false}
"""

import json
import sys
import time


def main() -> int:
    behavior = sys.argv[1] if len(sys.argv) > 1 else "ok"

    hello = json.loads(sys.stdin.readline())
    assert "hello" in hello
    if behavior == "no-ready":
        print(json.dumps({"ready": False}), flush=True)
        return 0
    print(json.dumps({"ready": True, "capabilities": ["stub"]}), flush=True)

    for line in sys.stdin:
        req = json.loads(line)
        rid = req["id"]
        if behavior == "crash-on-2" and rid == 2:
            return 1
        if behavior == "slow":
            time.sleep(10)
        if behavior == "garbage":
            print("this is not json", flush=True)
            continue
        if behavior == "wrong-id":
            print(json.dumps({"id": rid + 1, "status": "ok", "top1": 0.5}), flush=True)
            continue
        reply = {"id": rid, "status": "ok", "top1": 0.5 + rid / 1000.0}
        if behavior == "latency":
            reply["measured_latency"] = 0.125
        print(json.dumps(reply), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
