"""Modality encoders behind one fixed-dimension feature-vector contract.

The toy encoders are deterministic stand-ins for heavyweight pretrained
models: a signed-hash bag of unigrams+bigrams for text and a pooled random
projection for frame features. Hashing uses BLAKE2b with fixed
personalization strings so outputs are bit-identical across processes and
platforms. A remote-encoder HTTP client covers the case where real models
run elsewhere.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass
from hashlib import blake2b

import numpy as np
import requests

DEFAULT_DIM = 256

# Personalization tags keep bucket and sign hashes independent.
_BUCKET_PERSON = b"vm-bucket"
_SIGN_PERSON = b"vm-sign"
_PROJ_PERSON = b"vm-proj"


class EmptyFrames(ValueError):
    pass


class RemoteEncodeError(RuntimeError):
    pass


class Timeout(RemoteEncodeError):
    pass


class BadStatus(RemoteEncodeError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"remote encoder returned HTTP {code}: {body[:200]}")
        self.code = code


class SchemaViolation(RemoteEncodeError):
    pass


class NonFiniteValues(RemoteEncodeError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    dim: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} values, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dim: int) -> "FeatureVector":
        return cls(dim, np.zeros(dim))


@dataclass(frozen=True)
class EncoderDescriptor:
    name: str
    modality: str  # "text" | "video"
    output_dim: int
    kind: str  # "toy" | "remote"

    def __post_init__(self):
        if self.output_dim <= 0:
            raise ValueError("output_dim must be positive")


def _hash64(data: bytes, person: bytes) -> int:
    return int.from_bytes(blake2b(data, digest_size=8, person=person).digest(), "little")


def _tokenize(text: str) -> list[str]:
    return re.findall(r"[^\W_]+", text.casefold(), re.UNICODE)


def encode_text_toy(text: str, dim: int = DEFAULT_DIM) -> FeatureVector:
    """Signed-hash bag of unigrams and bigrams, L2-normalized.

    Bigrams of two identical adjacent tokens are skipped, so duplicating a
    token scales the vector uniformly (texts that differ only by repetition
    stay parallel). Empty text maps to the zero vector.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    tokens = _tokenize(text)
    if not tokens:
        return FeatureVector.zeros(dim)
    grams = list(tokens)
    for a, b in zip(tokens, tokens[1:]):
        if a != b:
            grams.append(a + "\x1f" + b)
    vec = np.zeros(dim)
    for g in grams:
        data = g.encode("utf-8")
        bucket = _hash64(data, _BUCKET_PERSON) % dim
        sign = 1.0 if _hash64(data, _SIGN_PERSON) & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return FeatureVector(dim, vec)


def _projection_matrix(in_dim: int, out_dim: int) -> np.ndarray:
    seed = _hash64(f"{in_dim}x{out_dim}".encode(), _PROJ_PERSON)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((out_dim, in_dim)) / math.sqrt(in_dim)


def encode_video_toy(frames, dim: int = DEFAULT_DIM) -> FeatureVector:
    """Mean+max pooling over frames, then a fixed seeded projection to dim."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise EmptyFrames("need at least one frame with at least one feature")
    pooled = np.concatenate([frames.mean(axis=0), frames.max(axis=0)])
    vec = _projection_matrix(pooled.shape[0], dim) @ pooled
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return FeatureVector(dim, vec)


def remote_encode(
    endpoint: str,
    modality: str,
    payload: dict,
    timeout_s: float = 10.0,
    max_payload_bytes: int = 4 * 1024 * 1024,
    max_attempts: int = 3,
    backoff_base_s: float = 0.2,
    sleep=time.sleep,
    session: requests.Session | None = None,
) -> FeatureVector:
    """POST a payload to a remote encoder and validate the returned vector.

    Transport errors and 5xx responses retry with exponential backoff
    (base * 2^attempt); 4xx responses never retry.
    """
    encoded = json.dumps({"modality": modality, "payload": payload}).encode("utf-8")
    if len(encoded) > max_payload_bytes:
        raise ValueError(f"payload {len(encoded)}B exceeds cap {max_payload_bytes}B")

    post = (session or requests).post
    last_exc: Exception | None = None
    for attempt in range(max_attempts):
        if attempt:
            sleep(backoff_base_s * (2 ** (attempt - 1)))
        try:
            resp = post(
                endpoint,
                data=encoded,
                headers={"Content-Type": "application/json"},
                timeout=timeout_s,
            )
        except requests.Timeout as e:
            last_exc = Timeout(f"request timed out: {e}")
            continue
        except requests.RequestException as e:
            last_exc = RemoteEncodeError(f"transport failure: {e}")
            continue
        if 400 <= resp.status_code < 500:
            raise BadStatus(resp.status_code, resp.text)
        if resp.status_code != 200:
            last_exc = BadStatus(resp.status_code, resp.text)
            continue
        return _parse_vector(resp)
    assert last_exc is not None
    raise last_exc


def _parse_vector(resp) -> FeatureVector:
    try:
        doc = resp.json()
    except ValueError:
        raise SchemaViolation("response is not JSON") from None
    if not isinstance(doc, dict) or "dim" not in doc or "values" not in doc:
        raise SchemaViolation(f"missing dim/values keys: {str(doc)[:200]}")
    dim, values = doc["dim"], doc["values"]
    if not isinstance(dim, int) or not isinstance(values, list) or len(values) != dim:
        raise SchemaViolation(f"dim={dim!r} does not match {len(values) if isinstance(values, list) else '?'} values")
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteValues("remote encoder returned non-finite values")
    return FeatureVector(dim, arr)
