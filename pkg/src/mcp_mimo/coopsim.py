"""In-process simulation of the two-BS cooperation protocol.

Each base station holds its own receive row of ``H``.  Before cooperating
they check the backhaul: the modeled load is the total payload of the CSI
and data exchange times a per-unit cost, and the cluster declares
congestion when that load exceeds ``threshold * bandwidth``.  Otherwise the
stations exchange CSI and data, agree on a processor, solve, and feed the
result back.

Messages travel through a single event queue ordered by (time, sequence
number), so a fixed configuration always yields the same transcript.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .channel import VirtualChannel, sample_output
from .constellation import GaussianInputs, Inputs, JointAlphabet, from_name, joint_inputs
from .infotheory import conditional_mean, lmmse_estimate
from .integrate import Integrator
from .power import PowerSolution, PowerSolveParams, algorithm1_solve, solve_power_gaussian
from .precoder import (
    PrecoderMatrix,
    PrecoderSolveParams,
    algorithm2_solve,
    printed_transmit_weights,
)

__all__ = [
    "MessageKind",
    "Role",
    "BackhaulLink",
    "BsNode",
    "Message",
    "Transcript",
    "SessionParams",
    "SessionConfig",
    "modeled_load",
    "is_congested",
    "run_uplink_session",
    "run_downlink_session",
    "run_session",
]

TRANSCRIPT_SCHEMA = "mcp-transcript/1"
CONFIG_SCHEMA = "mcp-session/1"


class MessageKind(str, enum.Enum):
    CSI_SHARE = "CsiShare"
    DATA_SHARE = "DataShare"
    CONGESTION_NOTICE = "CongestionNotice"
    POWER_FEEDBACK = "PowerFeedback"
    PRECODER_SHARE = "PrecoderShare"
    CROSS_TRANSMIT_SHARE = "CrossTransmitShare"


class Role(str, enum.Enum):
    UNDECIDED = "Undecided"
    PROCESSOR = "Processor"
    PEER = "Peer"


@dataclass(frozen=True)
class BackhaulLink:
    bandwidth: float
    threshold: float = 1.0
    per_message_cost: float = 1.0
    latency: float = 0.0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.bandwidth < 0 or self.per_message_cost < 0 or self.latency < 0:
            raise ValueError("bandwidth, cost and latency must be nonnegative")

    @property
    def capacity(self) -> float:
        return self.threshold * self.bandwidth


@dataclass(frozen=True)
class SessionParams:
    """Everything besides the channel, inputs and link that shapes a session."""

    block_length: int = 1
    resources: tuple = (1.0, 1.0)
    seed: int = 0
    power: PowerSolveParams = field(default_factory=PowerSolveParams)
    precoder: PrecoderSolveParams = field(default_factory=PrecoderSolveParams)

    def __post_init__(self):
        if self.block_length < 1:
            raise ValueError("block_length must be at least 1")
        if len(self.resources) != 2:
            raise ValueError("one resource figure per BS")


def _c(v) -> list:
    """JSON form of a complex scalar or array: nested [re, im] pairs."""
    arr = np.asarray(v)
    if arr.ndim == 0:
        z = complex(arr)
        return [float(z.real), float(z.imag)]
    return [_c(x) for x in arr]


@dataclass(frozen=True)
class Message:
    time: float
    seq: int
    sender: str
    receiver: str
    kind: MessageKind
    size: int
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "seq": self.seq,
            "from": self.sender,
            "to": self.receiver,
            "kind": self.kind.value,
            "size": self.size,
            "payload": self.payload,
        }


@dataclass
class Transcript:
    messages: list = field(default_factory=list)
    outcome: str = ""

    def kinds(self) -> list:
        return [m.kind for m in self.messages]

    def to_dict(self) -> dict:
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "outcome": self.outcome,
            "messages": [m.to_dict() for m in self.messages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class BsNode:
    """State of one base station during a session."""

    id: str
    index: int
    csi: np.ndarray
    resources: float
    decoded_estimates: Optional[np.ndarray] = None
    role: Role = Role.UNDECIDED
    peer_csi: Optional[np.ndarray] = None
    peer_data: Optional[np.ndarray] = None
    peer_resources: Optional[float] = None

    @property
    def ready(self) -> bool:
        return self.peer_csi is not None and self.peer_data is not None

    def handshake(self) -> Role:
        """Larger resources process; equal resources go to the lower id."""
        mine = (-self.resources, self.index)
        theirs = (-self.peer_resources, 1 - self.index)
        self.role = Role.PROCESSOR if mine < theirs else Role.PEER
        return self.role

    def full_channel(self, snr: float) -> VirtualChannel:
        rows = [None, None]
        rows[self.index] = self.csi
        rows[1 - self.index] = self.peer_csi
        return VirtualChannel(np.vstack(rows), snr)


def _payload_sizes(n_tx: int, block_length: int) -> dict:
    return {
        MessageKind.CSI_SHARE: n_tx,
        MessageKind.DATA_SHARE: n_tx * block_length,
    }


def modeled_load(n_tx: int, link: BackhaulLink, block_length: int = 1) -> float:
    """Backhaul cost of full cooperation: CSI and data, both directions."""
    sizes = _payload_sizes(n_tx, block_length)
    return link.per_message_cost * 2 * (sizes[MessageKind.CSI_SHARE] + sizes[MessageKind.DATA_SHARE])


def is_congested(n_tx: int, link: BackhaulLink, block_length: int = 1) -> bool:
    """Congestion iff the modeled load exceeds threshold * bandwidth (equality cooperates)."""
    return modeled_load(n_tx, link, block_length) > link.capacity


class _EventLoop:
    def __init__(self, link: BackhaulLink):
        self.link = link
        self.queue = []
        self.seq = 0
        self.transcript = Transcript()

    def send(self, now, sender, receiver, kind, size, payload=None):
        """Record the message and schedule its delivery one latency later."""
        msg = Message(now, self.seq, sender, receiver, kind, int(size), payload or {})
        self.seq += 1
        self.transcript.messages.append(msg)
        heapq.heappush(self.queue, (now + self.link.latency, msg.seq, msg))

    def run(self, handler):
        while self.queue:
            t, _, msg = heapq.heappop(self.queue)
            handler(t, msg)


def _decoded_estimates(vc: VirtualChannel, row: int, inputs: Inputs, block_length: int, seed: int):
    """Local conditional-mean estimates of the users' symbols from one receive row."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(row,)))
    local = vc.rows([row])
    P = np.eye(vc.n_tx)
    G = np.sqrt(vc.snr) * local.H
    out = np.empty((block_length, vc.n_tx), dtype=complex)
    for t in range(block_length):
        if isinstance(inputs, JointAlphabet):
            x = inputs.vectors[rng.choice(inputs.M, p=inputs.priors)]
            y = sample_output(G, x, rng)
            out[t] = conditional_mean(y, G, inputs)
        else:
            x = (rng.standard_normal(vc.n_tx) + 1j * rng.standard_normal(vc.n_tx)) / math.sqrt(2)
            y = sample_output(G, x, rng)
            out[t] = lmmse_estimate(y, local, P)
    return out


def _make_nodes(vc: VirtualChannel, inputs: Inputs, params: SessionParams):
    if vc.n_rx != 2:
        raise ValueError("the protocol is written for exactly two base stations")
    nodes = []
    for b in range(2):
        est = _decoded_estimates(vc, b, inputs, params.block_length, params.seed)
        nodes.append(BsNode(f"BS{b + 1}", b, vc.H[b].copy(), float(params.resources[b]), est))
    return nodes


def _open_session(loop, nodes, vc, link, params) -> bool:
    """Either declare congestion from both sides or start the full exchange."""
    sizes = _payload_sizes(vc.n_tx, params.block_length)
    load = modeled_load(vc.n_tx, link, params.block_length)
    if load > link.capacity:
        for node in nodes:
            other = nodes[1 - node.index]
            info = {"load": load, "capacity": link.capacity}
            loop.send(0.0, node.id, other.id, MessageKind.CONGESTION_NOTICE, 1, info)
        loop.transcript.outcome = "congestion"
        return False
    for node in nodes:
        other = nodes[1 - node.index]
        csi = {"row": node.index, "h": _c(node.csi), "resources": node.resources}
        loop.send(0.0, node.id, other.id, MessageKind.CSI_SHARE, sizes[MessageKind.CSI_SHARE], csi)
    for node in nodes:
        other = nodes[1 - node.index]
        data = {"estimates": _c(node.decoded_estimates)}
        loop.send(0.0, node.id, other.id, MessageKind.DATA_SHARE, sizes[MessageKind.DATA_SHARE], data)
    return True


def _absorb(node: BsNode, msg: Message):
    if msg.kind is MessageKind.CSI_SHARE:
        node.peer_csi = np.array([complex(re, im) for re, im in msg.payload["h"]])
        node.peer_resources = msg.payload["resources"]
    elif msg.kind is MessageKind.DATA_SHARE:
        node.peer_data = np.array([[complex(re, im) for re, im in row] for row in msg.payload["estimates"]])


def _solve_power(vc: VirtualChannel, caps, inputs: Inputs, params: PowerSolveParams) -> PowerSolution:
    if isinstance(inputs, GaussianInputs):
        return solve_power_gaussian(vc, caps)
    return algorithm1_solve(vc, caps, inputs, params)


def run_uplink_session(vc: VirtualChannel, caps, inputs: Inputs, link: BackhaulLink, params: SessionParams = None):
    """Full uplink cooperation round.

    Returns ``(Transcript, PowerSolution or None)``; ``None`` means the
    cluster declared congestion and stopped at minimal cooperation.
    """
    params = params or SessionParams()
    nodes = _make_nodes(vc, inputs, params)
    loop = _EventLoop(link)
    if not _open_session(loop, nodes, vc, link, params):
        return loop.transcript, None
    result = {}

    def handle(t, msg):
        if msg.receiver not in ("BS1", "BS2"):
            return
        node = nodes[int(msg.receiver[2]) - 1]
        _absorb(node, msg)
        if msg.kind is MessageKind.DATA_SHARE and node.ready and node.handshake() is Role.PROCESSOR:
            sol = _solve_power(node.full_channel(vc.snr), caps, inputs, params.power)
            result["solution"] = sol
            fb = {"powers": [float(p) for p in sol.powers]}
            peer = nodes[1 - node.index]
            loop.send(t, node.id, peer.id, MessageKind.POWER_FEEDBACK, vc.n_tx, fb)
            loop.send(t, node.id, f"UE{node.index + 1}", MessageKind.POWER_FEEDBACK, 1,
                      {"power": fb["powers"][node.index]})
        elif msg.kind is MessageKind.POWER_FEEDBACK:
            p = msg.payload["powers"][node.index]
            loop.send(t, node.id, f"UE{node.index + 1}", MessageKind.POWER_FEEDBACK, 1, {"power": p})

    loop.run(handle)
    loop.transcript.outcome = "cooperation"
    return loop.transcript, result["solution"]


def run_downlink_session(vc: VirtualChannel, inputs: Inputs, link: BackhaulLink, params: SessionParams = None):
    """Full downlink cooperation round.

    Returns ``(Transcript, PrecoderMatrix or None, weights or None)``; row
    ``b`` of the weights is what BS ``b`` applies to the user symbols.
    """
    params = params or SessionParams()
    nodes = _make_nodes(vc, inputs, params)
    loop = _EventLoop(link)
    if not _open_session(loop, nodes, vc, link, params):
        return loop.transcript, None, None
    solved = {}

    def handle(t, msg):
        if msg.receiver not in ("BS1", "BS2"):
            return
        node = nodes[int(msg.receiver[2]) - 1]
        _absorb(node, msg)
        if msg.kind is MessageKind.DATA_SHARE and node.ready:
            # each BS holds H and both symbols now and runs the iteration itself
            node.handshake()
            full = node.full_channel(vc.snr)
            sol = algorithm2_solve(full, None, inputs, params.precoder)
            solved[node.id] = sol
            W = printed_transmit_weights(full, sol.precoder)
            peer = nodes[1 - node.index]
            if node.role is Role.PROCESSOR:
                loop.send(t, node.id, peer.id, MessageKind.PRECODER_SHARE, sol.precoder.P.size,
                          sol.precoder.to_dict())
            loop.send(t, node.id, peer.id, MessageKind.CROSS_TRANSMIT_SHARE, vc.n_tx,
                      {"row": peer.index, "weights": _c(W[peer.index])})

    loop.run(handle)
    a, b = solved["BS1"], solved["BS2"]
    if not np.array_equal(a.precoder.P, b.precoder.P):
        raise RuntimeError("base stations disagree on the precoder")
    loop.transcript.outcome = "cooperation"
    return loop.transcript, a.precoder, a.weights


# ---------------------------------------------------------------------------
# serialized session configuration


@dataclass(frozen=True)
class SessionConfig:
    """A replayable session: direction, channel, inputs, link and parameters."""

    direction: str
    H: tuple
    snr_db: float
    constellations: tuple
    link: BackhaulLink
    caps: tuple = (1.0, 1.0)
    params: SessionParams = field(default_factory=SessionParams)
    normalize_energy: bool = False

    def __post_init__(self):
        if self.direction not in ("uplink", "downlink"):
            raise ValueError(f"unknown direction '{self.direction}'")

    def channel(self) -> VirtualChannel:
        H = np.array([[complex(re, im) for re, im in row] for row in self.H])
        return VirtualChannel.from_db(H, self.snr_db)

    def inputs(self) -> Inputs:
        return joint_inputs([from_name(c, self.normalize_energy) for c in self.constellations])

    def to_json(self) -> str:
        p = self.params
        data = {
            "schema": CONFIG_SCHEMA,
            "direction": self.direction,
            "H": [list(map(list, row)) for row in self.H],
            "snr_db": self.snr_db,
            "constellations": list(self.constellations),
            "normalize_energy": self.normalize_energy,
            "caps": list(self.caps),
            "link": asdict(self.link),
            "params": {
                "block_length": p.block_length,
                "resources": list(p.resources),
                "seed": p.seed,
                "power": _params_dict(p.power),
                "precoder": _params_dict(p.precoder),
            },
        }
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SessionConfig":
        d = json.loads(text)
        if d.get("schema") != CONFIG_SCHEMA:
            raise ValueError(f"unsupported session schema {d.get('schema')!r}")
        p = d["params"]
        params = SessionParams(
            block_length=p["block_length"],
            resources=tuple(p["resources"]),
            seed=p["seed"],
            power=_params_from(PowerSolveParams, p["power"]),
            precoder=_params_from(PrecoderSolveParams, p["precoder"]),
        )
        return cls(
            direction=d["direction"],
            H=tuple(tuple(tuple(e) for e in row) for row in d["H"]),
            snr_db=d["snr_db"],
            constellations=tuple(d["constellations"]),
            link=BackhaulLink(**d["link"]),
            caps=tuple(d["caps"]),
            params=params,
            normalize_energy=d.get("normalize_energy", False),
        )


def _params_dict(obj) -> dict:
    d = asdict(obj)
    d["integrator"] = asdict(obj.integrator)
    return d


def _params_from(cls, d: dict):
    d = dict(d)
    d["integrator"] = Integrator(**d["integrator"])
    return cls(**d)


def run_session(config: SessionConfig):
    """Replay a serialized session; returns the same tuple as the direct runner."""
    vc = config.channel()
    inputs = config.inputs()
    if config.direction == "uplink":
        return run_uplink_session(vc, config.caps, inputs, config.link, config.params)
    return run_downlink_session(vc, inputs, config.link, config.params)
