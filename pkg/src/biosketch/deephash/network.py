"""Toy joint-representation network: fixed linear encoders, FCA/BLA fusion,
tanh(bw * x) hashing layer and a softmax classifier, with exact gradients.

The hashing bandwidth is called ``beta_bw`` throughout; ``beta`` is reserved
for the weight of the binarization loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FUSION_MODES = ("FCA", "BLA")
ENCODERS = ("enc_face", "enc_iris")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 8.0
    beta: float = 2.0
    gamma: float = 2.0
    lam: float = 5e-4

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.lam) < 0:
            raise ValueError("loss weights must be non-negative")


def fuse(face: np.ndarray, iris: np.ndarray, mode: str) -> np.ndarray:
    """Concatenate (FCA) or flatten the outer product face * iris^T (BLA).

    Accepts single vectors or batches (rows).
    """
    face = np.asarray(face, dtype=float)
    iris = np.asarray(iris, dtype=float)
    if face.ndim != iris.ndim or face.ndim not in (1, 2):
        raise ShapeError("face and iris must both be vectors or both batches")
    if face.ndim == 2 and face.shape[0] != iris.shape[0]:
        raise ShapeError("face and iris batches differ in size")
    if mode == "FCA":
        return np.concatenate([face, iris], axis=-1)
    if mode == "BLA":
        outer = face[..., :, None] * iris[..., None, :]
        return outer.reshape(*face.shape[:-1], face.shape[-1] * iris.shape[-1])
    raise ShapeError(f"fusion mode must be one of {FUSION_MODES}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_classification(predictions, labels, weights=(), lam: float = 0.0) -> float:
    """Mean cross-entropy of softmax rows against one-hot labels plus lam * sum ||w||^2."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape or p.ndim != 2:
        raise ShapeError("predictions and labels must be matching 2-d arrays")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6) or (p < 0).any():
        raise ValueError("prediction rows must be probability vectors")
    mask = y > 0
    ce = -np.sum(y[mask] * np.log(p[mask])) / p.shape[0]
    reg = sum(float(np.sum(np.asarray(w, dtype=float) ** 2)) for w in weights)
    return float(ce + lam * reg)


def loss_binarization(activations) -> float:
    """-(1/J) * sum_n ||o_n||^2 over the batch."""
    o = np.atleast_2d(np.asarray(activations, dtype=float))
    return float(-np.sum(o * o) / o.shape[1])


def loss_balance(activations) -> float:
    """sum_n mean(o_n)^2 over the batch."""
    o = np.atleast_2d(np.asarray(activations, dtype=float))
    return float(np.sum(o.mean(axis=1) ** 2))


@dataclass
class Forward:
    face: np.ndarray
    iris: np.ndarray
    fused: np.ndarray
    joint: np.ndarray
    activations: np.ndarray
    probs: np.ndarray


@dataclass
class LossValue:
    total: float
    e1: float
    e2: float
    e3: float
    grads: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


@dataclass
class ToyNetwork:
    params: dict[str, np.ndarray]
    mode: str = "FCA"
    beta_bw: float = 1.0

    @classmethod
    def init(
        cls,
        d_face_in: int,
        d_iris_in: int,
        d_face: int = 8,
        d_iris: int = 8,
        d_joint: int = 32,
        n_bits: int = 32,
        n_classes: int = 4,
        mode: str = "FCA",
        seed: int = 0,
    ) -> "ToyNetwork":
        if mode not in FUSION_MODES:
            raise ShapeError(f"fusion mode must be one of {FUSION_MODES}")
        rng = np.random.default_rng(seed)
        d_fused = d_face + d_iris if mode == "FCA" else d_face * d_iris

        def glorot(rows, cols):
            return rng.normal(0.0, np.sqrt(2.0 / (rows + cols)), size=(rows, cols))

        params = {
            "enc_face": glorot(d_face, d_face_in),
            "enc_iris": glorot(d_iris, d_iris_in),
            "joint_w": glorot(d_joint, d_fused),
            "joint_b": np.zeros(d_joint),
            "hash_w": glorot(n_bits, d_joint),
            "hash_b": np.zeros(n_bits),
            "cls_w": glorot(n_classes, n_bits),
            "cls_b": np.zeros(n_classes),
        }
        return cls(params, mode)

    @property
    def n_bits(self) -> int:
        return self.params["hash_w"].shape[0]

    @property
    def n_classes(self) -> int:
        return self.params["cls_w"].shape[0]

    def weight_names(self) -> list[str]:
        return [k for k in self.params if not k.endswith("_b")]

    def copy(self) -> "ToyNetwork":
        return ToyNetwork({k: v.copy() for k, v in self.params.items()}, self.mode, self.beta_bw)

    def forward(self, x_face: np.ndarray, x_iris: np.ndarray) -> Forward:
        p = self.params
        face = x_face @ p["enc_face"].T
        iris = x_iris @ p["enc_iris"].T
        fused = fuse(face, iris, self.mode)
        if fused.shape[1] != p["joint_w"].shape[1]:
            raise ShapeError("fused width does not match the joint layer")
        joint = np.tanh(fused @ p["joint_w"].T + p["joint_b"])
        act = np.tanh(self.beta_bw * (joint @ p["hash_w"].T + p["hash_b"]))
        probs = softmax(act @ p["cls_w"].T + p["cls_b"])
        return Forward(face, iris, fused, joint, act, probs)

    def codes(self, x_face, x_iris) -> np.ndarray:
        """Binary codes in {-1, +1}; a zero activation reads as +1."""
        act = self.forward(x_face, x_iris).activations
        return np.where(act >= 0, 1, -1).astype(np.int8)

    def loss(self, x_face, x_iris, labels, weights: LossWeights, grad: bool = True) -> LossValue:
        """alpha*E1 + beta*E2 + gamma*E3 and its gradient for every parameter."""
        p = self.params
        fw = self.forward(x_face, x_iris)
        n = x_face.shape[0]
        y = np.zeros_like(fw.probs)
        y[np.arange(n), labels] = 1.0
        if not np.isfinite(fw.probs).all():
            nan = float("nan")
            return LossValue(nan, nan, nan, nan)
        reg = [p[k] for k in self.weight_names()]
        e1 = loss_classification(fw.probs, y, reg, weights.lam)
        e2 = loss_binarization(fw.activations)
        e3 = loss_balance(fw.activations)
        total = weights.alpha * e1 + weights.beta * e2 + weights.gamma * e3
        out = LossValue(float(total), e1, e2, e3)
        if not grad:
            return out

        o = fw.activations
        J = o.shape[1]
        g: dict[str, np.ndarray] = {}
        d_logits = weights.alpha * (fw.probs - y) / n
        g["cls_w"] = d_logits.T @ o
        g["cls_b"] = d_logits.sum(axis=0)
        d_o = d_logits @ p["cls_w"]
        d_o += weights.beta * (-2.0 / J) * o
        d_o += weights.gamma * (2.0 / J) * o.mean(axis=1, keepdims=True)
        d_a = d_o * self.beta_bw * (1.0 - o * o)
        g["hash_w"] = d_a.T @ fw.joint
        g["hash_b"] = d_a.sum(axis=0)
        d_joint = d_a @ p["hash_w"]
        d_u = d_joint * (1.0 - fw.joint**2)
        g["joint_w"] = d_u.T @ fw.fused
        g["joint_b"] = d_u.sum(axis=0)
        d_fused = d_u @ p["joint_w"]
        if self.mode == "FCA":
            d_face = d_fused[:, : fw.face.shape[1]]
            d_iris = d_fused[:, fw.face.shape[1] :]
        else:
            dz = d_fused.reshape(n, fw.face.shape[1], fw.iris.shape[1])
            d_face = np.einsum("nab,nb->na", dz, fw.iris)
            d_iris = np.einsum("nab,na->nb", dz, fw.face)
        g["enc_face"] = d_face.T @ x_face
        g["enc_iris"] = d_iris.T @ x_iris
        for k in self.weight_names():
            g[k] = g[k] + weights.alpha * weights.lam * 2.0 * p[k]
        out.grads = g
        return out


def total_loss(batch, network: ToyNetwork, weights: LossWeights) -> LossValue:
    """Loss value and gradient for ``batch = (x_face, x_iris, labels)``."""
    x_face, x_iris, labels = batch
    return network.loss(np.asarray(x_face, float), np.asarray(x_iris, float), np.asarray(labels), weights)
