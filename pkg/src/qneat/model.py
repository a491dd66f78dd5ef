"""Portable model artifact: a dense, dummy-regularized quantized network plus metadata.

Files are single JSON documents::

    {"format": "qneat-model", "version": "1", "checksum": <sha256>, "payload": {...}}

The checksum is the SHA-256 of the payload serialized compactly with its
fixed key order.  Bit arrays are packed little-endian and base64-encoded.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CorruptionError, VersionError
from .genome import DUMMY
from .mlpify import DenseLayer, DenseNetwork
from .quantizer import QuantizerPair, pack_bits, unpack_bits

FORMAT_NAME = "qneat-model"
FORMAT_VERSION = "1"
SUFFIX = ".qneat.json"


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def canonical_json(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def _layer_to_dict(layer: DenseLayer, quant: QuantizerPair | None) -> dict:
    n = layer.rows * layer.cols
    d = {
        "rows": layer.rows,
        "cols": layer.cols,
        "row_ids": list(layer.row_ids),
        "col_ids": list(layer.col_ids),
        "col_kinds": list(layer.col_kinds),
        "col_activations": list(layer.col_activations),
        "conn_mask": _b64(pack_bits(layer.present.reshape(n))),
        "pass_mask": _b64(pack_bits(layer.passthrough.reshape(n))),
    }
    if quant is None:
        ordinary = layer.present & ~layer.passthrough
        d["weight_codes"] = None
        d["weights"] = layer.weights[ordinary].tolist()
        d["weight_basis"] = None
    else:
        codes = layer.codes.reshape(n, -1)
        d["weight_codes"] = [_b64(pack_bits(codes[:, m] == 1)) for m in range(codes.shape[1])]
        d["weights"] = None
        d["weight_basis"] = quant.weights.to_dict()
    return d


def _layer_from_dict(d: dict, quant: QuantizerPair | None) -> DenseLayer:
    rows, cols = d["rows"], d["cols"]
    n = rows * cols
    present = unpack_bits(_unb64(d["conn_mask"]), n).reshape(rows, cols)
    passthrough = unpack_bits(_unb64(d["pass_mask"]), n).reshape(rows, cols)
    ordinary = present & ~passthrough
    weights = np.zeros((rows, cols))
    weights[passthrough] = 1.0
    codes = None
    if quant is None:
        weights[ordinary] = np.asarray(d["weights"], dtype=float)
    else:
        basis = quant.weights
        planes = [unpack_bits(_unb64(p), n) for p in d["weight_codes"]]
        if len(planes) != basis.k:
            raise CorruptionError("code plane count does not match basis size")
        codes = np.where(np.stack(planes, axis=1), 1, -1).astype(np.int8)
        codes[~ordinary.reshape(n)] = 0
        codes = codes.reshape(rows, cols, basis.k)
        weights[ordinary] = basis.decode(codes[ordinary])
    return DenseLayer(
        tuple(d["row_ids"]),
        tuple(d["col_ids"]),
        tuple(d["col_kinds"]),
        tuple(d["col_activations"]),
        present,
        passthrough,
        weights,
        codes,
    )


@dataclass(frozen=True, eq=False)
class ModelArtifact:
    network: DenseNetwork
    metadata: dict = field(default_factory=dict)

    @property
    def quantizers(self) -> QuantizerPair | None:
        return self.network.quant

    @property
    def input_count(self) -> int:
        return self.network.input_count

    def predict_proba(self, X) -> np.ndarray:
        return self.network.forward(X)[:, 0]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(int)

    def to_payload(self) -> dict:
        net = self.network
        quant = net.quant
        return {
            "input_count": net.input_count,
            "input_ids": list(net.input_ids),
            "has_bias": net.has_bias,
            "output_ids": list(net.output_ids),
            "shape": list(net.shape),
            "quantizers": None if quant is None else quant.to_dict(),
            "layers": [_layer_to_dict(layer, quant) for layer in net.layers],
            "metadata": self.metadata,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> ModelArtifact:
        quant = None if payload["quantizers"] is None else QuantizerPair.from_dict(payload["quantizers"])
        layers = tuple(_layer_from_dict(d, quant) for d in payload["layers"])
        net = DenseNetwork(
            input_count=payload["input_count"],
            input_ids=tuple(payload["input_ids"]),
            has_bias=payload["has_bias"],
            output_ids=tuple(payload["output_ids"]),
            layers=layers,
            quant=quant,
        )
        return cls(net, payload["metadata"])

    def dumps(self) -> str:
        payload = self.to_payload()
        digest = hashlib.sha256(canonical_json(payload).encode("ascii")).hexdigest()
        doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "checksum": digest, "payload": payload}
        return canonical_json(doc) + "\n"


def save(artifact: ModelArtifact, path) -> Path:
    path = Path(path)
    path.write_text(artifact.dumps(), encoding="ascii")
    return path


def loads(text: str) -> ModelArtifact:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptionError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptionError("not a qneat model file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported model format version {doc.get('version')!r}")
    payload = doc.get("payload")
    digest = hashlib.sha256(canonical_json(payload).encode("ascii")).hexdigest()
    if digest != doc.get("checksum"):
        raise CorruptionError("checksum mismatch")
    try:
        return ModelArtifact.from_payload(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptionError(f"malformed payload: {exc}") from None


def load(path) -> ModelArtifact:
    data = Path(path).read_bytes()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise CorruptionError("model file contains non-ASCII bytes") from None
    return loads(text)


def resource_estimate(artifact: ModelArtifact | DenseNetwork) -> dict:
    """Parameter and operation counts; pass-through wires cost nothing.

    ``param_bits`` uses the weight basis width, or 64 bits per weight for an
    unquantized network.
    """
    net = artifact.network if isinstance(artifact, ModelArtifact) else artifact
    params = sum(int(np.sum(l.present & ~l.passthrough)) for l in net.layers)
    bits = net.quant.weights.k if net.quant is not None else 64
    activations = sum(sum(1 for k in l.col_kinds if k != DUMMY) for l in net.layers)
    return {
        "param_count": params,
        "param_bits": params * bits,
        "mult_adds": params,
        "activation_count": activations,
    }
