"""Dual-head network: fusion -> adaptive layers / bottleneck -> routed
attention-pooling heads."""

import enum
import json
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import features
from . import numerics as nx
from .numerics import ConfigurationError, DimensionError, Param

PLACEMENTS = ("after_fusion", "after_bottleneck")
CHECKPOINT_MAGIC = b"BDHPD1"


class TaskType(enum.Enum):
    DDK = "ddk"
    CONTINUOUS = "speech"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"ddk": cls.DDK, "speech": cls.CONTINUOUS, "continuous": cls.CONTINUOUS}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown task {value!r}; expected 'ddk' or 'speech'") from None


class LanguageLookupError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown language"


class LanguageRegistry:
    """Ordered mapping from dataset tags to embedding-table rows."""

    def __init__(self, names=()):
        self._index = {}
        for n in names:
            self.register(n)

    def register(self, name):
        if name not in self._index:
            self._index[name] = len(self._index)
        return self._index[name]

    def index(self, name, lang_map=None):
        if lang_map and name in lang_map:
            name = lang_map[name]
        try:
            return self._index[name]
        except KeyError:
            raise LanguageLookupError(
                f"language/dataset {name!r} is not registered (known: {self.names}); "
                "map it explicitly with --lang-map"
            ) from None

    @property
    def names(self):
        return list(self._index)

    def __len__(self):
        return len(self._index)

    def __contains__(self, name):
        return name in self._index


@dataclass
class ModelConfig:
    d_ssl: int = 64
    d_wav: int = 18
    hidden: int = 128
    r: int = 4
    k: int = 3
    emb_dim: int = 16
    n_adaptive: int = 2
    placement: list = field(default_factory=lambda: list(PLACEMENTS))
    n_bottleneck: int = 1
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("d_ssl", "d_wav", "hidden", "r", "k", "emb_dim"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"model.{name} must be positive, got {getattr(self, name)}")
        if self.n_adaptive < 0 or self.n_bottleneck < 0:
            raise ConfigurationError("model.n_adaptive and model.n_bottleneck must be >= 0")
        if self.k % 2 == 0:
            raise ConfigurationError(f"model.k must be odd, got {self.k}")
        self.placement = list(self.placement)
        if not self.placement:
            raise ConfigurationError("model.placement must be non-empty")
        bad = [p for p in self.placement if p not in PLACEMENTS]
        if bad:
            raise ConfigurationError(f"model.placement has unknown slots {bad}; use {list(PLACEMENTS)}")
        if self.n_adaptive > len(self.placement):
            raise ConfigurationError(
                f"model.n_adaptive={self.n_adaptive} exceeds the {len(self.placement)} placement slots"
            )

    @property
    def adaptive_slots(self):
        return self.placement[: self.n_adaptive]


@dataclass
class AblationSwitches:
    """Component toggles; False removes the component."""

    dual_head: bool = True
    adaptive_layers: bool = True
    bottleneck: bool = True
    wavelet: bool = True
    contrastive: bool = True

    COMPONENTS = ("dual_head", "adaptive_layers", "bottleneck", "wavelet", "contrastive")

    @classmethod
    def baseline(cls):
        return cls(False, False, False, False, False)

    def without(self, component):
        if component not in self.COMPONENTS:
            raise ValueError(f"unknown component {component!r}; choose from {list(self.COMPONENTS)}")
        return AblationSwitches(**{**asdict(self), component: False})


# ---------------------------------------------------------------------------
# building blocks


def adaptive_layer(z, lang, p, eps=1e-8):
    """Standardize each channel over time, then modulate with language-derived
    scale and shift.

    z: (T, D) or (N, T, D); lang: int or (N,) ints; p: dict with "embedding",
    "g_w", "g_b", "h_w", "h_b".
    """
    single = z.value.ndim == 2
    lang = np.atleast_1d(np.asarray(lang, dtype=np.int64))
    table = p["embedding"].shape[0]
    if np.any(lang < 0) or np.any(lang >= table):
        raise LanguageLookupError(f"language index {lang.tolist()} outside table of size {table}")
    e = nx.take(p["embedding"], lang, axis=0)
    gamma = nx.dense(e, p["g_w"], p["g_b"])
    beta = nx.dense(e, p["h_w"], p["h_b"])
    d = z.shape[-1]
    zn = nx.time_standardize(z, eps)
    if single:
        gamma, beta = nx.reshape(gamma, (1, d)), nx.reshape(beta, (1, d))
    else:
        gamma, beta = nx.reshape(gamma, (-1, 1, d)), nx.reshape(beta, (-1, 1, d))
    return zn * gamma + beta


def bottleneck(z, p):
    """Compress/expand convolutions whose sigmoid gates z, plus a residual."""
    compressed = nx.relu(nx.conv1d(z, p["w1"], p["b1"]))
    expanded = nx.conv1d(compressed, p["w2"], p["b2"])
    return nx.sigmoid(expanded) * z + z


def attention_pool(z, query):
    """Softmax over frame scores <query, z_t>; returns (pooled, weights)."""
    weights = nx.softmax(nx.matvec(z, query), axis=-1)
    w = nx.reshape(weights, weights.shape + (1,))
    return nx.sum(w * z, axis=-2), weights


def head_forward(pooled, head):
    """sigmoid(fc2(relu(fc1(pooled)))) -> probability per pooled vector."""
    hidden = nx.relu(nx.dense(pooled, head["fc1_w"], head["fc1_b"]))
    logit = nx.dense(hidden, head["fc2_w"], head["fc2_b"])
    return nx.sigmoid(nx.reshape(logit, logit.shape[:-1]))


# ---------------------------------------------------------------------------
# the model


@dataclass
class HeadOutput:
    """Outputs of one head over the samples routed to it."""

    key: str
    index: np.ndarray  # positions in the input batch
    prob: nx.Tensor  # (n,)
    embedding: nx.Tensor  # (n, D)
    weights: list  # attention weights per sample (arrays)


class Model:
    def __init__(self, config, languages, switches=None, seed=0, dtype=None):
        self.config = config
        self.languages = languages if isinstance(languages, LanguageRegistry) else LanguageRegistry(languages)
        if len(self.languages) == 0:
            raise ConfigurationError("model needs at least one registered language")
        self.switches = switches or AblationSwitches()
        self.dtype = np.dtype(dtype or nx.default_dtype()).type
        self.params = {}
        self._init(np.random.default_rng(seed))

    @property
    def dim(self):
        c = self.config
        return c.d_ssl + (c.d_wav if self.switches.wavelet else 0)

    @property
    def head_keys(self):
        return ("ddk", "speech") if self.switches.dual_head else ("shared",)

    def route(self, task):
        return TaskType.parse(task).value if self.switches.dual_head else "shared"

    def _add(self, name, value):
        self.params[name] = Param(name, np.asarray(value, dtype=self.dtype))

    def _uniform(self, rng, fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def _init(self, rng):
        c, d = self.config, self.dim
        for stream, width in (("ssl", c.d_ssl), ("wav", c.d_wav)):
            if stream == "wav" and not self.switches.wavelet:
                continue
            self._add(f"fusion.{stream}.gain", np.ones(width))
            self._add(f"fusion.{stream}.bias", np.zeros(width))
        if self.switches.adaptive_layers and c.n_adaptive:
            self._add("lang.embedding", 0.1 * rng.standard_normal((len(self.languages), c.emb_dim)))
            for i in range(c.n_adaptive):
                self._add(f"adaptive.{i}.g_w", self._uniform(rng, c.emb_dim, (c.emb_dim, d)))
                # gamma starts near 1 so the first steps pass features through
                self._add(f"adaptive.{i}.g_b", np.ones(d))
                self._add(f"adaptive.{i}.h_w", self._uniform(rng, c.emb_dim, (c.emb_dim, d)))
                self._add(f"adaptive.{i}.h_b", np.zeros(d))
        if self.switches.bottleneck:
            mid = max(1, d // c.r)
            for i in range(c.n_bottleneck):
                self._add(f"bottleneck.{i}.w1", self._uniform(rng, c.k * d, (c.k, d, mid)))
                self._add(f"bottleneck.{i}.b1", self._uniform(rng, c.k * d, (mid,)))
                self._add(f"bottleneck.{i}.w2", self._uniform(rng, c.k * mid, (c.k, mid, d)))
                self._add(f"bottleneck.{i}.b2", self._uniform(rng, c.k * mid, (d,)))
        for key in self.head_keys:
            self._add(f"head.{key}.query", np.zeros(d))
            self._add(f"head.{key}.fc1_w", self._uniform(rng, d, (d, c.hidden)))
            self._add(f"head.{key}.fc1_b", self._uniform(rng, d, (c.hidden,)))
            self._add(f"head.{key}.fc2_w", self._uniform(rng, c.hidden, (c.hidden, 1)))
            self._add(f"head.{key}.fc2_b", self._uniform(rng, c.hidden, (1,)))

    def group(self, prefix):
        n = len(prefix)
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix)}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def n_parameters(self):
        return int(np.sum([p.value.size for p in self.params.values()]))

    # -- graph -------------------------------------------------------------

    def backbone(self, ssl, wav, lang):
        """Shared trunk over aligned (N, T, D) streams; returns (N, T, D)."""
        c = self.config
        norms = {"ssl": (self.params["fusion.ssl.gain"], self.params["fusion.ssl.bias"])}
        if self.switches.wavelet:
            if wav is None:
                raise DimensionError("wavelet stream enabled but no wavelet features given")
            norms["wav"] = (self.params["fusion.wav.gain"], self.params["fusion.wav.bias"])
        else:
            wav = None
        z = features.fuse(ssl, wav, norms, eps=c.eps)
        if z.shape[-1] != self.dim:
            raise DimensionError(f"fused width {z.shape[-1]} != model width {self.dim}")
        use_adaptive = self.switches.adaptive_layers and c.n_adaptive > 0
        slots = c.adaptive_slots if use_adaptive else []
        emb = self.params.get("lang.embedding")

        def adapt(z, slot):
            for i, s in enumerate(slots):
                if s == slot:
                    z = adaptive_layer(z, lang, {"embedding": emb, **self.group(f"adaptive.{i}.")}, c.eps)
            return z

        z = adapt(z, "after_fusion")
        if self.switches.bottleneck:
            for i in range(c.n_bottleneck):
                z = bottleneck(z, self.group(f"bottleneck.{i}."))
        return adapt(z, "after_bottleneck")

    def forward_batch(self, ssl, wav, lang, tasks):
        """Run a batch of utterances (lists of per-utterance arrays).

        Utterances are grouped by route and length so each group runs as one
        (N, T, D) block. Returns one HeadOutput per active head.
        """
        n = len(ssl)
        routes = [self.route(t) for t in tasks]
        lang = np.asarray(lang, dtype=np.int64)
        outputs = []
        for key in self.head_keys:
            members = [i for i in range(n) if routes[i] == key]
            if not members:
                continue
            head = self.group(f"head.{key}.")
            by_len = {}
            for i in members:
                by_len.setdefault(len(ssl[i]), []).append(i)
            pooled_parts, order, weights = [], [], []
            for t in sorted(by_len):
                idx = by_len[t]
                s = nx.Tensor(np.stack([ssl[i] for i in idx]).astype(self.dtype))
                w = None
                if self.switches.wavelet:
                    w = nx.Tensor(np.stack([wav[i] for i in idx]).astype(self.dtype))
                z = self.backbone(s, w, lang[idx])
                pooled, att = attention_pool(z, head["query"])
                pooled_parts.append(pooled)
                order.extend(idx)
                weights.extend(list(att.value))
            pooled = pooled_parts[0] if len(pooled_parts) == 1 else nx.concat(pooled_parts, axis=0)
            prob = head_forward(pooled, head)
            outputs.append(HeadOutput(key, np.asarray(order), prob, pooled, weights))
        return outputs

    def forward(self, ssl, wav, task, lang):
        """Single utterance -> (probability, embedding, attention weights)."""
        if isinstance(lang, str):
            lang = self.languages.index(lang)
        (out,) = self.forward_batch([ssl], [wav], [lang], [task])
        return float(out.prob.value[0]), out.embedding.value[0], out.weights[0]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model, extra=None):
    """Header magic, u32 JSON length, JSON metadata, then raw LE float32."""
    params = list(model.params.values())
    meta = {
        "config": asdict(model.config),
        "switches": asdict(model.switches),
        "languages": model.languages.names,
        "params": [{"name": p.name, "shape": list(p.shape)} for p in params],
        "dtype": "<f4",
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path, dtype=np.float32):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:6] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {raw[:6]!r})")
    (n,) = struct.unpack("<I", raw[6:10])
    meta = json.loads(raw[10 : 10 + n])
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in meta["config"].items() if k in known})
    switches = AblationSwitches(**meta["switches"])
    model = Model(config, LanguageRegistry(meta["languages"]), switches, dtype=dtype)
    offset = 10 + n
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated while reading {entry['name']}")
        values = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape)
        if entry["name"] not in model.params:
            raise CheckpointError(f"{path}: unexpected parameter {entry['name']}")
        model.params[entry["name"]] = Param(entry["name"], values.astype(dtype))
        offset = end
    return model, meta.get("extra", {})
