"""FedAVG round loop with error-feedback compression and partial participation.

One round covers ``E`` local iterations.  For iterations ``t0 .. t0+E-1``
each sampled client runs SGD from the broadcast model, compresses
``e_i + (x_local - x)`` with the round threshold ``lambda(gamma_{t0+E})``,
and keeps the residual.  The server then applies

    x <- x + (n / |S_t|) * sum_{i in S_t} p_i * message_i

summing in ascending client id.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .compressors import CompressorKind, SparseUpdate, compression_ratio, encoded_size_bytes
from .config import ExperimentConfig, config_hash
from .data import BatchSampler, Dataset
from .error_feedback import ErrorBuffer, compress_with_ef, freeze
from .models import Batch, local_sgd_step
from .schedules import ThresholdSchedule, threshold_at
from .tasks import Task, build_task
from .telemetry import RoundRecord, evaluate

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


@dataclass
class ClientState:
    cid: int
    data: Dataset
    weight: float
    buffer: ErrorBuffer
    sampler: BatchSampler

    def next_batch(self, model_kind: str) -> Batch:
        idx = self.sampler.next_indices()
        labels = None if model_kind == "quadratic" else self.data.labels[idx]
        return Batch(self.data.inputs[idx], labels)


@dataclass
class ExperimentResult:
    records: list
    x: np.ndarray
    trajectory: list = field(default_factory=list)


def sample_clients(n: int, S: int, rng) -> np.ndarray:
    if not (1 <= S <= n):
        raise ValueError(f"need 1 <= S <= n, got S={S}, n={n}")
    if S == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=S, replace=False))


def run_local_round(client: ClientState, model, x_global, gammas, comp: CompressorKind, lam=None):
    """``len(gammas)`` SGD steps from ``x_global``, then EF compression of the displacement."""
    x = np.array(x_global, dtype=np.float64)
    for gamma in gammas:
        loss, g = model.loss_and_grad(x, client.next_batch(model.kind))
        if not np.isfinite(loss):
            raise DivergenceError(f"client {client.cid}: non-finite local loss")
        x = local_sgd_step(x, g, gamma)
    delta = x - x_global
    msg, client.buffer = compress_with_ef(client.buffer, delta, comp, lam)
    return msg, client


def aggregate(x, messages: dict, weights, n: int) -> np.ndarray:
    """Apply the rescaled weighted sum of decompressed messages to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if not messages:
        return x.copy()
    acc = np.zeros_like(x)
    for cid in sorted(messages):
        msg = messages[cid]
        if msg.dim != x.shape[0]:
            raise ValueError(f"message from client {cid} has dim {msg.dim}, model has {x.shape[0]}")
        kernels.scatter_add(acc, msg.indices, msg.values, float(weights[cid]))
    return x + (n / len(messages)) * acc


class Simulation:
    """Stateful driver; iterate it (or call :meth:`step_round`) to advance rounds."""

    def __init__(self, cfg: ExperimentConfig, task: Task | None = None, workers: int = 1):
        self.cfg = cfg
        self.task = task if task is not None else build_task(cfg)
        self.model = self.task.model
        self.workers = workers
        self._pool = None
        n = cfg.n
        if len(self.task.clients) != n:
            raise ValueError(f"task has {len(self.task.clients)} clients, config says {n}")
        seeds = np.random.SeedSequence(cfg.seed).spawn(n + 1)
        self.round_rng = np.random.default_rng(seeds[0])
        d = self.task.dim
        self.clients = [
            ClientState(i, ds, float(self.task.weights[i]), ErrorBuffer.zeros(d),
                        BatchSampler(len(ds), cfg.batch_size, seeds[i + 1]))
            for i, ds in enumerate(self.task.clients)
        ]
        self.x = np.array(self.task.x0, dtype=np.float64)
        self.t = 0
        self.round = 0
        self.cumulative_bytes = 0
        self.gammas = cfg.stepsize.values()
        self.threshold = None
        if cfg.compressor.kind == "gamma_fedht":
            self.threshold = ThresholdSchedule.for_stepsizes(
                cfg.compressor.lambda0, cfg.stepsize, cfg.compressor.alpha
            )
        self.records: list[RoundRecord] = []
        self.initial_loss = self.global_loss()

    # ------------------------------------------------------------ helpers

    @property
    def done(self) -> bool:
        return self.t >= self.cfg.T

    def global_loss(self) -> float:
        return evaluate(self.model, self.x, self.task.train)[0]

    def round_threshold(self, t_next: int) -> float:
        comp = self.cfg.compressor
        if comp.kind == "gamma_fedht":
            return threshold_at(self.threshold, self.gammas[t_next])
        if comp.kind == "hard_threshold":
            return comp.param
        return 0.0

    # --------------------------------------------------------------- loop

    def step_round(self) -> RoundRecord:
        cfg = self.cfg
        if self.done:
            raise RuntimeError("simulation already reached T")
        t0, E = self.t, cfg.E
        selected = sample_clients(cfg.n, cfg.S, self.round_rng)
        gammas = self.gammas[t0 : t0 + E]
        lam = self.round_threshold(t0 + E)

        def work(cid):
            return run_local_round(self.clients[cid], self.model, self.x, gammas, cfg.compressor, lam)

        try:
            if self.workers > 1:
                if self._pool is None:
                    self._pool = ThreadPoolExecutor(self.workers)
                results = list(self._pool.map(work, selected))
            else:
                results = [work(cid) for cid in selected]
        except DivergenceError as exc:
            raise DivergenceError(str(exc), self.records) from None
        messages: dict[int, SparseUpdate] = {}
        for cid, (msg, client) in zip(selected, results):
            messages[int(cid)] = msg
            self.clients[cid] = client
        for c in self.clients:
            if c.cid not in messages:
                c.buffer = freeze(c.buffer)

        self.x = aggregate(self.x, messages, self.task.weights, cfg.n)
        self.t += E
        self.round += 1
        if not np.all(np.isfinite(self.x)):
            raise DivergenceError(f"non-finite global model at iteration {self.t}", self.records)

        round_bytes = sum(encoded_size_bytes(m) for m in messages.values())
        self.cumulative_bytes += round_bytes
        loss = acc = None
        if self.round % cfg.eval_every == 0 or self.done:
            loss = self.global_loss()
            if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(self.initial_loss, 1e-12):
                raise DivergenceError(f"global loss {loss} diverged at iteration {self.t}", self.records)
            if self.task.test is not None:
                acc = evaluate(self.model, self.x, self.task.test)[1]
        ids = sorted(messages)
        rec = RoundRecord(
            round=self.round,
            iteration=self.t,
            gamma_t=float(self.gammas[self.t]),
            lambda_t=float(lam),
            global_loss=loss,
            eval_accuracy=acc,
            mean_compression_ratio=float(np.mean([compression_ratio(messages[i]) for i in ids])),
            dim=self.task.dim,
            clients=ids,
            per_client_nnz=[messages[i].nnz for i in ids],
            round_bytes=round_bytes,
            cumulative_bytes=self.cumulative_bytes,
        )
        self.records.append(rec)
        return rec

    def __iter__(self):
        try:
            while not self.done:
                yield self.step_round()
        finally:
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None

    # --------------------------------------------------------- checkpoints

    def save_checkpoint(self, path) -> None:
        state = {
            "round_rng": self.round_rng.bit_generator.state,
            "samplers": [c.sampler.state() for c in self.clients],
        }
        np.savez(
            path,
            config_hash=np.array(config_hash(self.cfg)),
            t=np.array(self.t),
            round=np.array(self.round),
            cumulative_bytes=np.array(self.cumulative_bytes),
            x=self.x,
            errors=np.stack([c.buffer.e for c in self.clients]),
            rng_state=np.array(json.dumps(state)),
        )

    def load_checkpoint(self, path) -> None:
        with np.load(path, allow_pickle=False) as z:
            if str(z["config_hash"]) != config_hash(self.cfg):
                raise ValueError(f"{path}: checkpoint was written for a different config")
            self.t = int(z["t"])
            self.round = int(z["round"])
            self.cumulative_bytes = int(z["cumulative_bytes"])
            self.x = np.array(z["x"])
            errors = np.array(z["errors"])
            state = json.loads(str(z["rng_state"]))
        self.round_rng.bit_generator.state = state["round_rng"]
        for c, e, st in zip(self.clients, errors, state["samplers"]):
            c.buffer = ErrorBuffer(e.copy())
            c.sampler.set_state(st)


def run_experiment(
    cfg: ExperimentConfig,
    task: Task | None = None,
    keep_trajectory: bool = False,
    on_round=None,
    workers: int = 1,
) -> ExperimentResult:
    sim = Simulation(cfg, task, workers=workers)
    trajectory = [sim.x.copy()] if keep_trajectory else []
    for rec in sim:
        if keep_trajectory:
            trajectory.append(sim.x.copy())
        if on_round is not None:
            on_round(rec)
    return ExperimentResult(sim.records, sim.x, trajectory)
