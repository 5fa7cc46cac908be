"""Small deterministic discrete-event core: futures, processes, and
round-robin byte channels.

Time is an integer cycle count.  Processes are generators that yield
("sleep", t), ("wait", future), or ("wait_all", futures); heap ties break
on a monotone sequence number, so runs reproduce byte for byte.
"""

from __future__ import annotations

import heapq

__all__ = ["Future", "Sim", "ByteChannel"]


class Future:
    __slots__ = ("done", "time", "kind", "waiters", "payload")

    def __init__(self, kind: str = ""):
        self.done = False
        self.time = -1
        self.kind = kind
        self.waiters: list = []
        self.payload = None

    def resolve(self, sim: "Sim", t: int, payload=None) -> None:
        if self.done:
            raise RuntimeError("future resolved twice")
        self.done = True
        self.time = t
        self.payload = payload
        for cb in self.waiters:
            cb(t)
        self.waiters.clear()


class Sim:
    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now = 0

    def schedule(self, t: int, fn) -> None:
        """Run fn() at time t; fn is any callable."""
        if t < self.now:
            raise RuntimeError(f"scheduling into the past: {t} < {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn))

    def spawn(self, gen) -> None:
        self.schedule(self.now, lambda: self._step(gen))

    def run(self) -> None:
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()

    def _step(self, gen) -> None:
        try:
            req = next(gen)
        except StopIteration:
            return
        kind = req[0]
        if kind == "sleep":
            self.schedule(max(req[1], self.now), lambda: self._step(gen))
        elif kind == "wait":
            self._wait_all(gen, [req[1]])
        elif kind == "wait_all":
            self._wait_all(gen, list(req[1]))
        else:
            raise RuntimeError(f"unknown yield {req!r}")

    def _wait_all(self, gen, futs) -> None:
        pending = [f for f in futs if not f.done]
        if not pending:
            self.schedule(self.now, lambda: self._step(gen))
            return
        state = {"n": len(pending)}

        def arrived(_t, state=state):
            state["n"] -= 1
            if state["n"] == 0:
                self.schedule(self.now, lambda: self._step(gen))

        for f in pending:
            f.waiters.append(arrived)


class ByteChannel:
    """Shared channel granting ``bytes_per_cycle`` to one requester per
    cycle in rotation; a transfer of B bytes needs ceil(B / rate) grants.
    ``latency`` is a pipeline delay between service completion and data
    availability; it does not occupy the channel."""

    def __init__(self, sim: Sim, name: str, bytes_per_cycle: int, latency: int = 0):
        if bytes_per_cycle < 1:
            raise ValueError("channel rate must be at least one byte per cycle")
        self.sim = sim
        self.name = name
        self.bpc = bytes_per_cycle
        self.latency = latency
        self.active: list[list] = []  # [future, grants_remaining]
        self.ptr = 0
        self.synced_at = 0
        self.gen = 0
        self.busy_cycles = 0  # total grants issued

    def submit(self, nbytes: int) -> Future:
        fut = Future(self.name)
        t = self.sim.now
        if nbytes <= 0:
            fut.resolve(self.sim, t)
            return fut
        self._sync(t)
        grants = -(-nbytes // self.bpc)
        self.active.append([fut, grants])
        self.busy_cycles += grants
        self._reschedule()
        return fut

    def _sync(self, t: int) -> None:
        dt = t - self.synced_at
        k = len(self.active)
        if dt and k:
            full, rem = divmod(dt, k)
            for i, req in enumerate(self.active):
                pos = (i - self.ptr) % k
                req[1] -= full + (1 if pos < rem else 0)
                if req[1] < 0:
                    raise RuntimeError(f"{self.name}: missed a completion")
            self.ptr = (self.ptr + dt) % k
        self.synced_at = t

    def _reschedule(self) -> None:
        self.gen += 1
        if not self.active:
            return
        gen = self.gen
        k = len(self.active)
        best_t, best_req = None, None
        for i, req in enumerate(self.active):
            pos = (i - self.ptr) % k
            tc = self.synced_at + (req[1] - 1) * k + pos + 1
            if best_t is None or tc < best_t:
                best_t, best_req = tc, req
        self.sim.schedule(best_t, lambda: self._complete(gen, best_req, best_t))

    def _complete(self, gen: int, req, tc: int) -> None:
        if gen != self.gen:
            return  # superseded by a newer arrival
        self._sync(tc)
        if req[1] != 0:
            raise RuntimeError(f"{self.name}: completion fired early")
        idx = self.active.index(req)
        self.active.pop(idx)
        if idx < self.ptr:
            self.ptr -= 1
        if self.ptr >= len(self.active) and self.active:
            self.ptr = 0
        done_at = tc + self.latency
        if self.latency:
            self.sim.schedule(done_at, lambda: req[0].resolve(self.sim, done_at))
        else:
            req[0].resolve(self.sim, tc)
        self._reschedule()
