"""Model file format.

Layout: magic "DCOLZ", format version as little-endian u16, then four
length-prefixed sections (u32 length + payload) in fixed order:

  1. config      canonical JSON (sorted keys, compact separators)
  2. categories  JSON array of category names
  3. clusters    u32 count, then per cluster: u32 id, layer, network_id,
                 member count, center length, histogram length; the center
                 and histogram as float32 little-endian; members as
                 u16-length-prefixed UTF-8 strings
  4. networks    u32 count, then per network: u32 layer count, u32 layer
                 sizes, then per layer the weight matrix (row-major) and
                 bias vector as float32 little-endian

All numeric payloads are little-endian. Saving the same trained model twice
produces byte-identical files.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct

import numpy as np

from .clustering import Cluster, ClusterConfig
from .features import DaisyParams
from .globaldesc import GistParams
from .mlp import Network, TrainConfig
from .pipeline import MODEL_FORMAT_VERSION, EngineConfig, Model
from .refine import BilateralParams

MAGIC = b"DCOLZ"


def config_to_dict(cfg: EngineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> EngineConfig:
    return EngineConfig(
        cluster=ClusterConfig(**data["cluster"]),
        train=TrainConfig(**data["train"]),
        samples_per_image=data["samples_per_image"],
        topk=data["topk"],
        hidden_layers=data["hidden_layers"],
        daisy=DaisyParams(**data["daisy"]),
        gist=GistParams(**data["gist"]),
        chroma_filter=BilateralParams(**data["chroma_filter"]),
        semantic_filter=BilateralParams(**data["semantic_filter"]),
    )


def _write_section(out: io.BytesIO, payload: bytes) -> None:
    out.write(struct.pack("<I", len(payload)))
    out.write(payload)


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _pack_clusters(clusters: list[Cluster]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(clusters)))
    for c in clusters:
        buf.write(struct.pack("<IIIIII", c.id, c.layer, c.network_id,
                              len(c.members), c.center.size, c.histogram.size))
        buf.write(_f32_bytes(c.center))
        buf.write(_f32_bytes(c.histogram))
        for member in c.members:
            raw = member.encode("utf-8")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
    return buf.getvalue()


def _pack_networks(networks: list[Network]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(networks)))
    for net in networks:
        sizes = net.layer_sizes
        buf.write(struct.pack("<I", len(sizes)))
        buf.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(net.weights, net.biases):
            buf.write(_f32_bytes(w))
            buf.write(_f32_bytes(b))
    return buf.getvalue()


def save_model(model: Model, path) -> None:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", model.version))
    config_json = json.dumps(config_to_dict(model.config), sort_keys=True,
                             separators=(",", ":"))
    _write_section(out, config_json.encode("utf-8"))
    _write_section(out, json.dumps(list(model.categories),
                                   separators=(",", ":")).encode("utf-8"))
    _write_section(out, _pack_clusters(model.clusters))
    _write_section(out, _pack_networks(model.networks))
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("model file truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()


def _unpack_clusters(data: bytes) -> list[Cluster]:
    rd = _Reader(data)
    (count,) = rd.unpack("<I")
    clusters = []
    for _ in range(count):
        cid, layer, net_id, n_members, center_len, hist_len = rd.unpack("<IIIIII")
        center = rd.f32(center_len)
        histogram = rd.f32(hist_len)
        members = []
        for _ in range(n_members):
            (length,) = rd.unpack("<H")
            members.append(rd.take(length).decode("utf-8"))
        clusters.append(Cluster(id=cid, layer=layer, center=center,
                                histogram=histogram, members=members,
                                network_id=net_id))
    return clusters


def _unpack_networks(data: bytes) -> list[Network]:
    rd = _Reader(data)
    (count,) = rd.unpack("<I")
    networks = []
    for _ in range(count):
        (n_sizes,) = rd.unpack("<I")
        sizes = list(rd.unpack(f"<{n_sizes}I"))
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rd.f32(fan_out * fan_in).reshape(fan_out, fan_in))
            biases.append(rd.f32(fan_out))
        networks.append(Network(weights, biases))
    return networks


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data)
    if rd.take(len(MAGIC)) != MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    (version,) = rd.unpack("<H")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    sections = []
    for _ in range(4):
        (length,) = rd.unpack("<I")
        sections.append(rd.take(length))
    config = config_from_dict(json.loads(sections[0].decode("utf-8")))
    categories = tuple(json.loads(sections[1].decode("utf-8")))
    clusters = _unpack_clusters(sections[2])
    networks = _unpack_networks(sections[3])
    return Model(version=version, config=config, categories=categories,
                 clusters=clusters, networks=networks)
