"""Contact networks: representation, SBM generation, ingestion from contact logs,
quintile binning of raw columns, and the node/edge/contact file formats."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MAIN = "main"
AUXILIARY = "auxiliary"
CHANNELS = ("room", "nurse")


class FormatError(ValueError):
    """A cohort/contact file does not follow its documented layout."""


class BinningError(ValueError):
    pass


@dataclass
class ContactNetwork:
    """Nodes with binary features and per-node neighbor lists.

    Only main nodes carry neighbor lists; auxiliary nodes appear solely as
    neighbors of main nodes. ``contact_days`` optionally parallels
    ``neighbors`` with the latest qualifying contact day of every edge.
    """

    ids: list
    features: np.ndarray
    neighbors: list
    is_main: np.ndarray
    contact_days: list | None = None

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        n = len(self.ids)
        self.features = np.asarray(self.features, dtype=float).reshape(n, -1)
        self.neighbors = [np.asarray(nb, dtype=np.int64) for nb in self.neighbors]
        self.is_main = np.asarray(self.is_main, dtype=bool)
        if len(self.neighbors) != n or self.is_main.shape != (n,):
            raise ValueError("ids, neighbors and roles must have one entry per node")
        if self.contact_days is not None:
            self.contact_days = [np.asarray(d, dtype=np.int64) for d in self.contact_days]

    @property
    def node_count(self):
        return len(self.ids)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def main_indices(self):
        return np.flatnonzero(self.is_main)

    @property
    def degrees(self):
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)

    def edge_list(self):
        """(src, dst) index arrays over main nodes' neighbor lists, lexicographic."""
        src = [np.full(len(self.neighbors[i]), i) for i in self.main_indices]
        dst = [self.neighbors[i] for i in self.main_indices]
        if not src:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.concatenate(src).astype(np.int64), np.concatenate(dst).astype(np.int64)

    def with_features(self, features):
        return ContactNetwork(self.ids, features, self.neighbors, self.is_main, self.contact_days)

    def undirected_neighbors(self):
        """Neighbor sets closed under symmetry (auxiliary nodes get their main contacts)."""
        out = [set(map(int, nb)) for nb in self.neighbors]
        for i, nb in enumerate(self.neighbors):
            for j in nb:
                out[int(j)].add(i)
        return out

    def validate(self, symmetric=True):
        """Check structural invariants; raise ValueError on the first violation."""
        for i, nb in enumerate(self.neighbors):
            if not self.is_main[i] and len(nb):
                raise ValueError(f"auxiliary node {self.ids[i]} has a neighbor list")
            if np.any(nb == i):
                raise ValueError(f"self-loop at node {self.ids[i]}")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"duplicate neighbors at node {self.ids[i]}")
            if len(nb) and (nb.min() < 0 or nb.max() >= self.node_count):
                raise ValueError(f"neighbor index out of range at node {self.ids[i]}")
        if symmetric:
            for i in self.main_indices:
                for j in self.neighbors[i]:
                    if self.is_main[j] and i not in set(self.neighbors[j].tolist()):
                        raise ValueError(f"asymmetric main edge {self.ids[i]}-{self.ids[j]}")
        if np.any((self.features != 0) & (self.features != 1)):
            raise ValueError("features must be binary")


# ---------------------------------------------------------------------------
# stochastic block model


@dataclass(frozen=True)
class SbmConfig:
    nodes_per_block: tuple = (250, 250)
    p_within: float = 0.5
    p_between: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes_per_block", tuple(int(b) for b in self.nodes_per_block))
        if not self.nodes_per_block or any(b < 1 for b in self.nodes_per_block):
            raise ValueError("need at least one non-empty block")
        if sum(self.nodes_per_block) < 2:
            raise ValueError("need at least two nodes")
        for p in (self.p_within, self.p_between):
            if not 0.0 <= p <= 1.0:
                raise ValueError("edge probabilities must lie in [0, 1]")


def block_labels(config: SbmConfig):
    return np.repeat(np.arange(len(config.nodes_per_block)), config.nodes_per_block)


def generate_sbm(config: SbmConfig) -> ContactNetwork:
    """Undirected SBM; every node is a main node and features are left empty."""
    rng = np.random.default_rng(config.seed)
    blocks = block_labels(config)
    n = blocks.size
    prob = np.where(blocks[:, None] == blocks[None, :], config.p_within, config.p_between)
    draws = rng.random((n, n))
    adj = np.triu(draws < prob, k=1)
    adj = adj | adj.T
    neighbors = [np.flatnonzero(row) for row in adj]
    return ContactNetwork(
        ids=[str(i) for i in range(n)],
        features=np.zeros((n, 0)),
        neighbors=neighbors,
        is_main=np.ones(n, dtype=bool),
    )


# ---------------------------------------------------------------------------
# contact-log ingestion


@dataclass(frozen=True)
class ContactEvent:
    main_id: str
    neighbor_id: str
    day: int
    channel: str

    def __post_init__(self):
        if str(self.main_id) == str(self.neighbor_id):
            raise ValueError(f"contact of {self.main_id} with itself")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")


def build_network_from_contacts(events: Iterable[ContactEvent], channel: str,
                                cutoff_per_main: Mapping[str, int]) -> ContactNetwork:
    """Per-main causal contact views for one channel.

    Node ``i`` (main) gets every distinct partner sharing ``channel`` with it on a
    day <= cutoff(i). Contacts are symmetric events, so an event also counts
    for the partner when the partner is itself a main node (subject to the
    partner's own cutoff). Partners outside the main set become auxiliary
    nodes. Events past the cutoff are dropped silently.
    """
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    cutoffs = {str(k): int(v) for k, v in cutoff_per_main.items()}
    latest: dict = {m: {} for m in cutoffs}
    aux: set = set()

    def add(main, other, day):
        if day <= cutoffs[main]:
            prev = latest[main].get(other)
            latest[main][other] = day if prev is None else max(prev, day)
            if other not in cutoffs:
                aux.add(other)

    for ev in events:
        if ev.channel != channel:
            continue
        a, b, day = str(ev.main_id), str(ev.neighbor_id), int(ev.day)
        if a not in cutoffs:
            raise ValueError(f"no cutoff date for main id {a!r}")
        add(a, b, day)
        if b in cutoffs:
            add(b, a, day)

    ids = list(cutoffs) + sorted(aux)
    index = {k: i for i, k in enumerate(ids)}
    neighbors, days = [], []
    for k in ids:
        partners = latest.get(k, {})
        order = sorted(partners, key=lambda p: index[p])
        neighbors.append(np.array([index[p] for p in order], dtype=np.int64))
        days.append(np.array([partners[p] for p in order], dtype=np.int64))
    is_main = np.array([k in cutoffs for k in ids], dtype=bool)
    return ContactNetwork(ids, np.zeros((len(ids), 0)), neighbors, is_main, days)


# ---------------------------------------------------------------------------
# binning


def quintile_bin(raw, training_mask, name="column"):
    """One-hot quintile encoding with boundaries fitted on training rows only.

    Values equal to a boundary go to the lower bin; values outside the
    training range fall into the extreme bins.
    """
    raw = np.asarray(raw, dtype=float)
    mask = np.asarray(training_mask, dtype=bool)
    train = raw[mask]
    if np.unique(train).size < 5:
        raise BinningError(f"{name}: fewer than 5 distinct training values")
    bounds = np.quantile(train, [0.2, 0.4, 0.6, 0.8])
    idx = np.searchsorted(bounds, raw, side="left")
    out = np.zeros((raw.size, 5), dtype=np.int8)
    out[np.arange(raw.size), idx] = 1
    return out


# ---------------------------------------------------------------------------
# files


def _open_rows(path, header_prefix):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[: len(header_prefix)] != list(header_prefix):
        raise FormatError(f"{path}: row 1: expected header starting {','.join(header_prefix)}, got {','.join(header)}")
    return path, header, rows[1:]


def _parse_int(path, rowno, col, text):
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{path}: row {rowno} column {col!r}: not an integer: {text!r}") from None


def write_nodes(network: ContactNetwork, path):
    d = network.feature_dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "role"] + [f"f{k + 1}" for k in range(d)])
        for i, node in enumerate(network.ids):
            role = MAIN if network.is_main[i] else AUXILIARY
            w.writerow([node, role] + [int(v) for v in network.features[i]])


def write_edges(network: ContactNetwork, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_days = network.contact_days is not None
        w.writerow(["src", "dst"] + (["last_contact_day"] if has_days else []))
        for i in network.main_indices:
            for k, j in enumerate(network.neighbors[i]):
                row = [network.ids[i], network.ids[j]]
                if has_days:
                    row.append(int(network.contact_days[i][k]))
                w.writerow(row)


def read_network(nodes_path, edges_path) -> ContactNetwork:
    path, header, rows = _open_rows(nodes_path, ["id", "role"])
    d = len(header) - 2
    ids, roles, feats = [], [], []
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {r}: expected {len(header)} columns, got {len(row)}")
        ids.append(row[0])
        if row[1] not in (MAIN, AUXILIARY):
            raise FormatError(f"{path}: row {r} column 'role': expected main or auxiliary, got {row[1]!r}")
        roles.append(row[1] == MAIN)
        vals = []
        for k in range(d):
            v = _parse_int(path, r, header[k + 2], row[k + 2])
            if v not in (0, 1):
                raise FormatError(f"{path}: row {r} column {header[k + 2]!r}: feature must be 0 or 1")
            vals.append(v)
        feats.append(vals)
    index = {k: i for i, k in enumerate(ids)}
    if len(index) != len(ids):
        raise FormatError(f"{path}: duplicate node ids")

    epath, eheader, erows = _open_rows(edges_path, ["src", "dst"])
    has_days = len(eheader) > 2
    neighbors = [[] for _ in ids]
    days = [[] for _ in ids]
    for r, row in enumerate(erows, start=2):
        if len(row) != len(eheader):
            raise FormatError(f"{epath}: row {r}: expected {len(eheader)} columns, got {len(row)}")
        for col, key in (("src", row[0]), ("dst", row[1])):
            if key not in index:
                raise FormatError(f"{epath}: row {r} column {col!r}: unknown node id {key!r}")
        neighbors[index[row[0]]].append(index[row[1]])
        if has_days:
            days[index[row[0]]].append(_parse_int(epath, r, "last_contact_day", row[2]))
    net = ContactNetwork(ids, np.array(feats, dtype=float).reshape(len(ids), d), neighbors,
                         np.array(roles, dtype=bool), days if has_days else None)
    try:
        net.validate(symmetric=False)
    except ValueError as exc:
        raise FormatError(f"{epath}: {exc}") from None
    return net


def read_contacts(path) -> list:
    path, header, rows = _open_rows(path, ["main_id", "neighbor_id", "day", "channel"])
    events = []
    for r, row in enumerate(rows, start=2):
        if len(row) != 4:
            raise FormatError(f"{path}: row {r}: expected 4 columns, got {len(row)}")
        day = _parse_int(path, r, "day", row[2])
        if row[3] not in CHANNELS:
            raise FormatError(f"{path}: row {r} column 'channel': expected room or nurse, got {row[3]!r}")
        if row[0] == row[1]:
            raise FormatError(f"{path}: row {r}: main_id equals neighbor_id")
        events.append(ContactEvent(row[0], row[1], day, row[3]))
    return events


def write_contacts(events: Sequence[ContactEvent], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["main_id", "neighbor_id", "day", "channel"])
        for ev in events:
            w.writerow([ev.main_id, ev.neighbor_id, ev.day, ev.channel])
