"""Bit-exact parameter files.

Layout: magic ``CDCN`` | u32 format version | u32 manifest length | manifest
(UTF-8 JSON) | payload. All integers and payload numbers are little-endian;
the payload is the concatenation of each entry's flat array in manifest
order, so a reload reproduces every parameter bit for bit.

Two kinds live in the same container:

* ``mlp-bundle`` — named nets, each described by its layer sizes; used for
  trained policies, critics, and the ranking module (whose fixed targets and
  assignment mode ride along in ``meta``).
* ``scripted`` — a fixed (agents x steps) action table, so a hand-written
  play can be evaluated through the same tooling as a learned one.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .mappo import Agents
from .nets import Mlp
from .ranking import RankingModule, TargetSequence

MAGIC = b"CDCN"
FORMAT_VERSION = 1


@dataclass
class ParamsBundle:
    kind: str  # "mlp-bundle" | "scripted"
    nets: Dict[str, Mlp] = field(default_factory=dict)
    table: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def _flat_len(sizes) -> int:
    return sum(sizes[k + 1] * sizes[k] + sizes[k + 1] for k in range(len(sizes) - 1))


def save_params(path, bundle: ParamsBundle) -> None:
    entries = []
    blobs = []
    if bundle.kind == "mlp-bundle":
        for name, net in bundle.nets.items():
            entries.append({"name": name, "sizes": list(net.sizes), "dtype": "<f8"})
            blobs.append(np.ascontiguousarray(net.flat_params(), dtype="<f8").tobytes())
    elif bundle.kind == "scripted":
        entries.append({"name": "actions", "shape": list(bundle.table.shape), "dtype": "<i8"})
        blobs.append(np.ascontiguousarray(bundle.table, dtype="<i8").tobytes())
    else:
        raise ValueError(f"unknown bundle kind {bundle.kind!r}")
    manifest = json.dumps(
        {"kind": bundle.kind, "entries": entries, "meta": bundle.meta},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> ParamsBundle:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a parameter file (bad magic)")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    mlen = struct.unpack("<I", data[8:12])[0]
    manifest = json.loads(data[12 : 12 + mlen].decode("utf-8"))
    payload = data[12 + mlen :]
    bundle = ParamsBundle(kind=manifest["kind"], meta=manifest.get("meta", {}))
    offset = 0
    if bundle.kind == "mlp-bundle":
        for entry in manifest["entries"]:
            sizes = entry["sizes"]
            n = _flat_len(sizes)
            flat = np.frombuffer(payload, dtype=entry["dtype"], count=n, offset=offset).astype(
                np.float64
            )
            offset += n * 8
            net = Mlp.zeros(sizes)
            net.set_flat(flat)
            bundle.nets[entry["name"]] = net
    elif bundle.kind == "scripted":
        entry = manifest["entries"][0]
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        bundle.table = (
            np.frombuffer(payload, dtype=entry["dtype"], count=n, offset=offset)
            .astype(np.int64)
            .reshape(shape)
        )
    else:
        raise ValueError(f"{path}: unknown bundle kind {bundle.kind!r}")
    return bundle


# --- bridges to the training objects -----------------------------------------------


def bundle_from_training(agents: Agents, ranking: Optional[RankingModule]) -> ParamsBundle:
    nets: Dict[str, Mlp] = {}
    for i, p in enumerate(agents.policies):
        nets[f"policy_{i}"] = p
    for i, c in enumerate(agents.hybrid_critics):
        nets[f"hybrid_critic_{i}"] = c
    nets["ext_critic"] = agents.ext_critic
    meta = {"n_agents": agents.n_agents}
    if ranking is not None:
        nets["ranking"] = ranking.net
        meta.update(
            {
                "targets": [float(v) for v in ranking.targets.values],
                "assignment": ranking.assignment,
                "n_actions": ranking.n_actions,
                "state_dim": ranking.state_dim,
            }
        )
    return ParamsBundle(kind="mlp-bundle", nets=nets, meta=meta)


def training_from_bundle(bundle: ParamsBundle) -> Tuple[Agents, Optional[RankingModule]]:
    if bundle.kind != "mlp-bundle":
        raise ValueError("not a trained-parameters bundle")
    n = int(bundle.meta["n_agents"])
    agents = Agents(
        policies=[bundle.nets[f"policy_{i}"] for i in range(n)],
        hybrid_critics=[bundle.nets[f"hybrid_critic_{i}"] for i in range(n)],
        ext_critic=bundle.nets["ext_critic"],
    )
    ranking = None
    if "ranking" in bundle.nets:
        ranking = RankingModule(
            net=bundle.nets["ranking"],
            targets=TargetSequence(np.array(bundle.meta["targets"], dtype=np.float64)),
            n_agents=n,
            n_actions=int(bundle.meta["n_actions"]),
            state_dim=int(bundle.meta["state_dim"]),
            assignment=bundle.meta.get("assignment", "identity"),
        )
    return agents, ranking


def save_scripted(path, table: np.ndarray, meta: Optional[dict] = None) -> None:
    save_params(path, ParamsBundle(kind="scripted", table=np.asarray(table), meta=meta or {}))
