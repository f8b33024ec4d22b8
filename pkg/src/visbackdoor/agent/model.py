"""The stand-in vision-language agent: a two-layer CNN fused with a bag-of-tokens prompt."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .schema import ActionSchema, AgentOutput

LINEAR_LAYERS = ("proj", "fuse", "verb", "arg", "rat")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes. Vocabulary sizes come from the action schema."""

    n_verbs: int
    n_arguments: int
    n_prompt_tokens: int
    n_rationale_tokens: int
    rationale_length: int = 8
    image_size: int = 64
    channels: tuple[int, int] = (8, 16)
    kernel: int = 3
    pool: tuple[int, int] = (2, 4)
    proj_dim: int = 64
    embed_dim: int = 64
    fusion_dim: int = 64
    adapter_rank: int = 0  # 0 disables the low-rank adapters

    @classmethod
    def from_schema(cls, schema: ActionSchema, **overrides) -> "ModelConfig":
        return cls(n_verbs=schema.n_verbs, n_arguments=schema.n_arguments,
                   n_prompt_tokens=schema.n_prompt_tokens,
                   n_rationale_tokens=schema.n_rationale_tokens,
                   rationale_length=schema.rationale_length, **overrides)

    def validate(self) -> None:
        dims = (self.n_verbs, self.n_arguments, self.n_prompt_tokens, self.n_rationale_tokens,
                self.rationale_length, self.image_size, self.kernel, self.proj_dim,
                self.embed_dim, self.fusion_dim, *self.channels, *self.pool)
        if any(int(d) <= 0 for d in dims):
            raise ValueError("model dimensions must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.image_size % (self.pool[0] * self.pool[1]):
            raise ValueError("image size must be divisible by the product of the pooling windows")
        if self.adapter_rank < 0:
            raise ValueError("adapter_rank must be non-negative")

    @property
    def feature_dim(self) -> int:
        side = self.image_size // (self.pool[0] * self.pool[1])
        return self.channels[1] * side * side

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter shapes in declaration order."""
        c1, c2 = self.channels
        k = self.kernel
        r_out = self.rationale_length * self.n_rationale_tokens
        lin = {
            "proj": (self.proj_dim, self.feature_dim),
            "fuse": (self.fusion_dim, self.proj_dim + self.embed_dim),
            "verb": (self.n_verbs, self.fusion_dim),
            "arg": (self.n_arguments, self.fusion_dim),
            "rat": (r_out, self.fusion_dim),
        }
        out = {
            "conv1.w": (c1, 3, k, k), "conv1.b": (c1,),
            "conv2.w": (c2, c1, k, k), "conv2.b": (c2,),
            "proj.w": lin["proj"], "proj.b": (self.proj_dim,),
            "embed": (self.n_prompt_tokens, self.embed_dim),
        }
        for name in LINEAR_LAYERS[1:]:
            out[f"{name}.w"] = lin[name]
            out[f"{name}.b"] = (lin[name][0],)
        if self.adapter_rank:
            for name in LINEAR_LAYERS:
                o, i = lin[name]
                out[f"{name}.lora_a"] = (self.adapter_rank, i)
                out[f"{name}.lora_b"] = (o, self.adapter_rank)
        return out

    def parameter_count(self) -> int:
        """Closed-form count of every parameter (base and adapter)."""
        c1, c2 = self.channels
        k, r = self.kernel, self.adapter_rank
        d_in = {"proj": self.feature_dim, "fuse": self.proj_dim + self.embed_dim,
                "verb": self.fusion_dim, "arg": self.fusion_dim, "rat": self.fusion_dim}
        d_out = {"proj": self.proj_dim, "fuse": self.fusion_dim, "verb": self.n_verbs,
                 "arg": self.n_arguments, "rat": self.rationale_length * self.n_rationale_tokens}
        conv = c1 * (3 * k * k + 1) + c2 * (c1 * k * k + 1)
        linear = sum(d_out[n] * (d_in[n] + 1) for n in LINEAR_LAYERS)
        adapters = sum(r * (d_in[n] + d_out[n]) for n in LINEAR_LAYERS)
        return conv + linear + self.n_prompt_tokens * self.embed_dim + adapters

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["channels"] = list(self.channels)
        d["pool"] = list(self.pool)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["pool"] = tuple(d["pool"])
        return cls(**d)


@dataclass(frozen=True)
class AgentParams:
    """Immutable parameter set; arrays are stored read-only in declaration order."""

    config: ModelConfig
    arrays: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        shapes = self.config.shapes()
        if len(self.arrays) != len(shapes):
            raise ValueError(f"expected {len(shapes)} parameter arrays, got {len(self.arrays)}")
        frozen = []
        for (name, shape), a in zip(shapes.items(), self.arrays):
            a = np.array(a, dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"parameter {name}: expected {shape}, got {a.shape}")
            a.setflags(write=False)
            frozen.append(a)
        object.__setattr__(self, "arrays", tuple(frozen))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.config.shapes())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[self.names.index(name)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.names, self.arrays))

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self.arrays))

    def trainable_names(self) -> tuple[str, ...]:
        """Adapters only when they are enabled, otherwise every parameter."""
        if self.config.adapter_rank:
            return tuple(n for n in self.names if ".lora_" in n)
        return self.names

    def replace(self, updates: Mapping[str, np.ndarray]) -> "AgentParams":
        unknown = set(updates) - set(self.names)
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)}")
        return AgentParams(self.config, tuple(updates.get(n, a) for n, a in zip(self.names, self.arrays)))

    def tobytes(self) -> bytes:
        return b"".join(a.astype("<f8").tobytes() for a in self.arrays)

    def with_adapters(self, rank: int, seed: int) -> "AgentParams":
        """Copy of a base parameter set with fresh rank-``rank`` adapters (B = 0)."""
        if self.config.adapter_rank:
            raise ValueError("parameters already carry adapters")
        cfg = replace(self.config, adapter_rank=int(rank))
        fresh = init_params(seed, cfg).as_dict()
        fresh.update(self.as_dict())
        return AgentParams(cfg, tuple(fresh[n] for n in cfg.shapes()))


def init_params(seed: int, config: ModelConfig) -> AgentParams:
    """Seeded He-normal weights, zero biases, zero adapter ``B`` factors."""
    config.validate()
    rng = np.random.default_rng([int(seed), 0x61])
    arrays = []
    for name, shape in config.shapes().items():
        if name.endswith(".b") or name.endswith(".lora_b"):
            arrays.append(np.zeros(shape))
        elif name == "embed":
            arrays.append(rng.normal(0.0, 1.0, size=shape))
        else:
            fan_in = int(np.prod(shape[1:]))
            arrays.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))
    return AgentParams(config, tuple(arrays))


@dataclass
class Logits:
    verb: Tensor
    argument: Tensor
    rationale: Tensor  # N x K x rationale vocabulary


def param_tensors(params: AgentParams, differentiable: Optional[Iterable[str]] = None) -> dict[str, Tensor]:
    """Wrap parameters as tensors; names in ``differentiable`` get ``requires_grad``."""
    flags = set(params.trainable_names() if differentiable is None else differentiable)
    return {n: Tensor(a, requires_grad=n in flags, name=n) for n, a in zip(params.names, params.arrays)}


def encode_prompts(prompts: Sequence[Sequence[int]], n_tokens: int) -> tuple[np.ndarray, np.ndarray]:
    """Padded id matrix and per-position averaging weights (``N x L x 1``)."""
    if not prompts:
        raise ValueError("no prompts given")
    width = max(len(p) for p in prompts)
    ids = np.zeros((len(prompts), max(width, 1)), dtype=np.float64)
    weights = np.zeros((len(prompts), max(width, 1), 1))
    for i, p in enumerate(prompts):
        if len(p) == 0:
            raise ValueError(f"prompt {i} is empty")
        for j, tok in enumerate(p):
            if not 0 <= int(tok) < n_tokens:
                raise ValueError(f"prompt {i}: token id {tok} outside vocabulary of {n_tokens}")
            ids[i, j] = int(tok)
        weights[i, :len(p), 0] = 1.0 / len(p)
    return ids, weights


def _dense(x: Tensor, t: Mapping[str, Tensor], name: str) -> Tensor:
    y = ad.linear(x, t[f"{name}.w"], t[f"{name}.b"])
    if f"{name}.lora_a" in t:
        y = y + ad.linear(ad.linear(x, t[f"{name}.lora_a"]), t[f"{name}.lora_b"])
    return y


def forward(params: AgentParams, images, prompts: Sequence[Sequence[int]],
            tensors: Optional[Mapping[str, Tensor]] = None) -> Logits:
    """Logits for a batch of ``N x H x W x 3`` images (a single image is promoted)."""
    cfg = params.config
    t = tensors if tensors is not None else param_tensors(params, differentiable=())
    x = images if isinstance(images, Tensor) else Tensor(images)
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
        if prompts and not isinstance(prompts[0], (list, tuple, np.ndarray)):
            prompts = [prompts]
    if x.shape[1:] != (cfg.image_size, cfg.image_size, 3):
        raise ValueError(f"expected images of shape N x {cfg.image_size} x {cfg.image_size} x 3, got {x.shape}")
    if len(prompts) != x.shape[0]:
        raise ValueError(f"{x.shape[0]} images but {len(prompts)} prompts")
    pad = cfg.kernel // 2
    h = ad.permute(x, (0, 3, 1, 2))
    h = ad.mean_pool(ad.relu(ad.conv2d(h, t["conv1.w"], t["conv1.b"], pad=pad)), cfg.pool[0])
    h = ad.mean_pool(ad.relu(ad.conv2d(h, t["conv2.w"], t["conv2.b"], pad=pad)), cfg.pool[1])
    v = ad.relu(_dense(ad.flatten(h), t, "proj"))
    ids, weights = encode_prompts(prompts, cfg.n_prompt_tokens)
    e = ad.sum(ad.mul(ad.embedding(t["embed"], ids), Tensor(weights)), axis=1)
    z = ad.relu(_dense(ad.concat([v, e], axis=1), t, "fuse"))
    rat = ad.reshape(_dense(z, t, "rat"), (x.shape[0], cfg.rationale_length, cfg.n_rationale_tokens))
    return Logits(_dense(z, t, "verb"), _dense(z, t, "arg"), rat)


def sample_losses(logits: Logits, verbs, arguments, rationales) -> Tensor:
    """Per-sample sum of verb, argument and every rationale-position cross-entropy."""
    verbs = np.asarray(verbs, dtype=np.float64).reshape(-1)
    arguments = np.asarray(arguments, dtype=np.float64).reshape(-1)
    rationales = np.asarray(rationales, dtype=np.float64).reshape(len(verbs), -1)
    lv = ad.softmax_ce(logits.verb, verbs)
    la = ad.softmax_ce(logits.argument, arguments)
    lr = ad.sum(ad.softmax_ce(logits.rationale, rationales), axis=1)
    return lv + la + lr


def loss(logits: Logits, verbs, arguments, rationales) -> Tensor:
    """Batch-mean task loss; for one sample this is the plain sum over heads."""
    per = sample_losses(logits, verbs, arguments, rationales)
    return ad.scale(ad.sum(per), 1.0 / per.shape[0])


def target_arrays(outputs: Sequence[AgentOutput]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (np.array([o.verb for o in outputs]), np.array([o.argument for o in outputs]),
            np.array([o.rationale for o in outputs]))


def decode(logits: Logits) -> list[AgentOutput]:
    """Per-head argmax; ``np.argmax`` returns the first maximum, i.e. the lowest id."""
    verbs = np.argmax(logits.verb.data, axis=-1)
    args = np.argmax(logits.argument.data, axis=-1)
    rats = np.argmax(logits.rationale.data, axis=-1)
    return [AgentOutput(int(v), int(a), tuple(int(r) for r in row)) for v, a, row in zip(verbs, args, rats)]


def predict(params: AgentParams, images, prompts: Sequence[Sequence[int]], chunk: int = 64) -> list[AgentOutput]:
    """Greedy structured outputs, evaluated in chunks without building a graph."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
        prompts = [prompts]
    out: list[AgentOutput] = []
    with ad.no_grad():
        for i in range(0, len(images), chunk):
            out.extend(decode(forward(params, images[i:i + chunk], prompts[i:i + chunk])))
    return out


def parameter_gradient(params: AgentParams, images, prompts, verbs, arguments, rationales,
                       names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Flattened gradient of the batch-mean loss over ``names`` (default: all) in declaration order."""
    names = tuple(params.names if names is None else names)
    t = param_tensors(params, names)
    value = loss(forward(params, images, prompts, t), verbs, arguments, rationales)
    return ad.flatten_gradient(ad.grad(value, [t[n] for n in names]))
