"""Domain-agnostic veracity classifier.

Input features are mapped into a domain-specific and a domain-shared subspace;
two gated cross-attention blocks exchange information between them; decoders
predict the label, reconstruct the input, regress the domain vector from the
specific subspace, and adversarially predict it from the shared one. Training
alternates a generator step (everything except the domain predictor, with the
domain-prediction term negated) and a domain-predictor step.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn

from .errors import VeriloopError


@dataclass
class ModelConfig:
    d: int = 512
    heads: int = 4
    lambdas: tuple[float, float, float, float, float] = (1.0, 1.0, 0.5, 0.1, 0.1)
    lr_generator: float = 1e-4
    lr_domain_classifier: float = 1e-5
    epochs: int = 300
    batch: int = 128
    tau: float = 0.5
    use_attention: bool = True
    use_specific: bool = True
    use_shared: bool = True
    split_tokens: bool = False  # reshape each subspace vector into heads tokens
    val_frac: float = 0.1

    def __post_init__(self) -> None:
        if self.d % self.heads != 0:
            raise VeriloopError(f"d={self.d} must be divisible by heads={self.heads}")
        if any(l < 0 for l in self.lambdas) or len(self.lambdas) != 5:
            raise VeriloopError("lambdas must be five nonnegative weights")
        if self.tau <= 0:
            raise VeriloopError("tau must be positive")

    def to_json(self) -> dict:
        payload = asdict(self)
        payload["lambdas"] = list(self.lambdas)
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "ModelConfig":
        payload = dict(payload)
        if "lambdas" in payload:
            payload["lambdas"] = tuple(payload["lambdas"])
        return cls(**payload)


@dataclass
class LossBreakdown:
    pred: float
    recon: float
    specific: float
    shared: float
    ortho: float
    contrast: float
    total: float

    def to_json(self) -> dict:
        return asdict(self)


class GatedCrossAttention(nn.Module):
    """Scaled dot-product attention between two subspace vectors, merged back
    into the query stream through a gated, layer-normalized residual."""

    def __init__(self, d: int, heads: int, split_tokens: bool):
        super().__init__()
        self.d = d
        self.split_tokens = split_tokens
        if split_tokens:
            self.tokens, self.token_dim, self.heads = heads, d // heads, 1
        else:
            self.tokens, self.token_dim, self.heads = 1, d, heads
        self.q_proj = nn.Linear(self.token_dim, self.token_dim)
        self.k_proj = nn.Linear(self.token_dim, self.token_dim)
        self.v_proj = nn.Linear(self.token_dim, self.token_dim)
        self.w_out = nn.Linear(d, d)
        self.norm = nn.LayerNorm(d)
        self.gate_pre = nn.Parameter(torch.zeros(1))

    def gate(self) -> torch.Tensor:
        return torch.sigmoid(self.gate_pre)

    def forward(self, query_vec: torch.Tensor, kv_vec: torch.Tensor) -> torch.Tensor:
        batch = query_vec.shape[0]
        q_tok = query_vec.reshape(batch, self.tokens, self.token_dim)
        kv_tok = kv_vec.reshape(batch, self.tokens, self.token_dim)
        head_dim = self.token_dim // self.heads

        def to_heads(x: torch.Tensor) -> torch.Tensor:
            return x.reshape(batch, -1, self.heads, head_dim).transpose(1, 2)

        q = to_heads(self.q_proj(q_tok))
        k = to_heads(self.k_proj(kv_tok))
        v = to_heads(self.v_proj(kv_tok))
        scores = q @ k.transpose(-2, -1) / head_dim**0.5
        attn = torch.softmax(scores, dim=-1) @ v
        merged = attn.transpose(1, 2).reshape(batch, self.d)
        return query_vec + self.gate() * self.norm(self.w_out(merged))


class DualSubspaceClassifier(nn.Module):
    def __init__(self, input_dim: int, domain_dim: int, config: ModelConfig):
        super().__init__()
        self.input_dim = input_dim
        self.domain_dim = domain_dim
        self.config = config
        d = config.d
        self.f_specific = nn.Sequential(nn.Linear(input_dim, d), nn.ReLU())
        self.f_shared = nn.Sequential(nn.Linear(input_dim, d), nn.ReLU())
        self.attn_to_shared = GatedCrossAttention(d, config.heads, config.split_tokens)
        self.attn_to_specific = GatedCrossAttention(d, config.heads, config.split_tokens)
        self.g_pred = nn.Sequential(nn.Linear(2 * d, d), nn.ReLU(), nn.Linear(d, 1), nn.Sigmoid())
        self.g_recons = nn.Sequential(nn.Linear(2 * d, d), nn.ReLU(), nn.Linear(d, input_dim))
        self.g_specific = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, domain_dim))
        self.g_shared = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, domain_dim), nn.Sigmoid())

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        if x.shape[1] != self.input_dim:
            raise VeriloopError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        f_sp = self.f_specific(x)
        f_sh = self.f_shared(x)
        if self.config.use_attention:
            f_sh_prime = self.attn_to_shared(f_sh, f_sp)
            f_sp_prime = self.attn_to_specific(f_sp, f_sh)
        else:
            f_sp_prime, f_sh_prime = f_sp, f_sh
        concat = torch.cat([f_sp_prime, f_sh_prime], dim=1)
        return {
            "f_specific": f_sp,
            "f_shared": f_sh,
            "f_specific_prime": f_sp_prime,
            "f_shared_prime": f_sh_prime,
            "y_prob": self.g_pred(concat).squeeze(1),
            "reconstruction": self.g_recons(concat),
            "domain_from_specific": self.g_specific(f_sp),
            "domain_from_shared": self.g_shared(f_sh),
        }

    def loss_terms(
        self, x: torch.Tensor, y: torch.Tensor, domain_targets: torch.Tensor
    ) -> dict[str, torch.Tensor]:
        out = self.forward(x)
        cfg = self.config
        batch = x.shape[0]
        y_prob = out["y_prob"].clamp(1e-7, 1 - 1e-7)
        pred = -(y * torch.log(y_prob) + (1 - y) * torch.log(1 - y_prob)).mean()
        recon = ((x - out["reconstruction"]) ** 2).mean()
        zero = torch.zeros((), dtype=x.dtype, device=x.device)
        specific = ((domain_targets - out["domain_from_specific"]) ** 2).mean() if cfg.use_specific else zero
        shared = ((out["domain_from_shared"] - domain_targets) ** 2).mean() if cfg.use_shared else zero
        cross = out["f_specific_prime"].transpose(0, 1) @ out["f_shared_prime"]
        ortho = (cross**2).sum() / batch**2
        sim = nn.functional.cosine_similarity(out["f_specific_prime"], out["f_shared_prime"], dim=1)
        contrast = torch.log1p(torch.exp((sim - 1.0) / cfg.tau)).mean()
        l1, l2, l3, l4, l5 = cfg.lambdas
        total = pred + l1 * recon + l2 * specific + l3 * shared + l4 * ortho + l5 * contrast
        return {
            "pred": pred,
            "recon": recon,
            "specific": specific,
            "shared": shared,
            "ortho": ortho,
            "contrast": contrast,
            "total": total,
            "y_prob": out["y_prob"],
        }


def _breakdown(terms: dict[str, torch.Tensor]) -> LossBreakdown:
    def val(key: str) -> float:
        item = terms[key]
        return float(item.detach()) if isinstance(item, torch.Tensor) else float(item)

    return LossBreakdown(
        pred=val("pred"),
        recon=val("recon"),
        specific=val("specific"),
        shared=val("shared"),
        ortho=val("ortho"),
        contrast=val("contrast"),
        total=val("total"),
    )


class Trainer:
    """Owns the module and the two optimizers of the minimax scheme."""

    def __init__(self, input_dim: int, domain_dim: int, config: ModelConfig, seed: int = 0):
        torch.manual_seed(seed)
        self.config = config
        self.model = DualSubspaceClassifier(input_dim, domain_dim, config)
        self.seed = seed
        gen_params = [p for name, p in self.model.named_parameters() if not name.startswith("g_shared")]
        self.opt_generator = torch.optim.Adam(gen_params, lr=config.lr_generator)
        self.opt_domain = torch.optim.Adam(self.model.g_shared.parameters(), lr=config.lr_domain_classifier)

    def train_step(self, x: torch.Tensor, y: torch.Tensor, domain_targets: torch.Tensor) -> LossBreakdown:
        terms = self.model.loss_terms(x, y, domain_targets)
        if not torch.isfinite(terms["total"]):
            raise VeriloopError(f"non-finite loss: {_breakdown(terms).to_json()}")
        l1, l2, l3, l4, l5 = self.config.lambdas
        generator_objective = (
            terms["pred"]
            + l1 * terms["recon"]
            + l2 * terms["specific"]
            - l3 * terms["shared"]
            + l4 * terms["ortho"]
            + l5 * terms["contrast"]
        )
        self.opt_generator.zero_grad(set_to_none=True)
        self.opt_domain.zero_grad(set_to_none=True)
        generator_objective.backward()
        self.opt_generator.step()
        if self.config.use_shared:
            self.domain_step(x, domain_targets)
        return _breakdown(terms)

    def domain_step(self, x: torch.Tensor, domain_targets: torch.Tensor) -> float:
        """Second phase: only the domain predictor descends its own loss."""
        out = self.model.forward(x)
        shared = ((out["domain_from_shared"] - domain_targets) ** 2).mean()
        self.opt_generator.zero_grad(set_to_none=True)
        self.opt_domain.zero_grad(set_to_none=True)
        shared.backward()
        self.opt_domain.step()
        return float(shared.detach())

    def predict_probs(self, features: np.ndarray) -> np.ndarray:
        self.model.eval()
        with torch.no_grad():
            out = self.model.forward(torch.as_tensor(features, dtype=_model_dtype(self.model)))
        self.model.train()
        return out["y_prob"].cpu().numpy()

    def state_dict(self) -> dict:
        return {
            "model": copy.deepcopy(self.model.state_dict()),
            "opt_generator": copy.deepcopy(self.opt_generator.state_dict()),
            "opt_domain": copy.deepcopy(self.opt_domain.state_dict()),
        }

    def load_state_dict(self, state: dict) -> None:
        self.model.load_state_dict(state["model"])
        self.opt_generator.load_state_dict(state["opt_generator"])
        self.opt_domain.load_state_dict(state["opt_domain"])


def _model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


@dataclass
class FitResult:
    trainer: Trainer
    val_macro_f1: float
    history: list[LossBreakdown] = field(default_factory=list)


def fit(
    features: np.ndarray,
    labels: np.ndarray,
    domain_targets: np.ndarray,
    sources: list[str],
    config: ModelConfig,
    seed: int = 0,
) -> FitResult:
    """Batched two-step training; keeps the state with the best validation
    macro-F1 on a held-out slice of the labelled set."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    domain_targets = np.asarray(domain_targets, dtype=np.float32)
    n = len(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise VeriloopError("training needs both classes present")
    if counts.min() < 2:
        raise VeriloopError("training needs at least 2 samples per class")

    rng = np.random.default_rng([seed, 23])
    val_idx: list[int] = []
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        take = max(1, int(round(config.val_frac * len(members))))
        val_idx.extend(members[:take].tolist())
    val_mask = np.zeros(n, dtype=bool)
    val_mask[val_idx] = True
    train_idx = np.flatnonzero(~val_mask)
    val_idx = np.flatnonzero(val_mask)

    trainer = Trainer(features.shape[1], domain_targets.shape[1], config, seed=seed)
    x_train = torch.as_tensor(features[train_idx])
    y_train = torch.as_tensor(labels[train_idx], dtype=torch.float32)
    d_train = torch.as_tensor(domain_targets[train_idx])

    best_state = trainer.state_dict()
    best_f1 = -1.0
    history: list[LossBreakdown] = []
    n_train = len(train_idx)
    for epoch in range(config.epochs):
        order = np.random.default_rng([seed, 29, epoch]).permutation(n_train)
        last = None
        for start in range(0, n_train, config.batch):
            batch = torch.as_tensor(order[start : start + config.batch])
            last = trainer.train_step(x_train[batch], y_train[batch], d_train[batch])
        if last is not None:
            history.append(last)
        val_probs = trainer.predict_probs(features[val_idx])
        metrics = evaluate(labels[val_idx], val_probs, [sources[i] for i in val_idx])
        if metrics["macro_f1"] > best_f1 + 1e-12:
            best_f1 = metrics["macro_f1"]
            best_state = trainer.state_dict()
    trainer.load_state_dict(best_state)
    return FitResult(trainer=trainer, val_macro_f1=best_f1, history=history)


def evaluate(
    y_true: np.ndarray, probs: np.ndarray, sources: list[str], threshold: float = 0.5
) -> dict:
    """Per-source accuracy/precision/recall/F1 with the positive class = 1."""
    y_true = np.asarray(y_true, dtype=np.int64)
    preds = (np.asarray(probs) >= threshold).astype(np.int64)
    per_source: dict[str, dict[str, float]] = {}
    for source in sorted(set(sources)):
        mask = np.asarray([s == source for s in sources])
        if not mask.any():
            raise VeriloopError(f"no test records for source {source!r}")
        yt, yp = y_true[mask], preds[mask]
        tp = int(((yt == 1) & (yp == 1)).sum())
        fp = int(((yt == 0) & (yp == 1)).sum())
        fn = int(((yt == 1) & (yp == 0)).sum())
        tn = int(((yt == 0) & (yp == 0)).sum())
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_source[source] = {
            "acc": (tp + tn) / len(yt),
            "prec": prec,
            "rec": rec,
            "f1": f1,
        }
    macro_f1 = float(np.mean([m["f1"] for m in per_source.values()]))
    return {"per_source": per_source, "macro_f1": macro_f1}


def gradient_check(
    input_dim: int = 8,
    domain_dim: int = 3,
    batch: int = 4,
    config: ModelConfig | None = None,
    seed: int = 0,
    step: float = 1e-4,
) -> float:
    """Max relative error between autograd and central finite differences of the
    total loss over every parameter, in double precision."""
    config = config or ModelConfig(d=8, heads=4, batch=batch, epochs=1)
    torch.manual_seed(seed)
    model = DualSubspaceClassifier(input_dim, domain_dim, config).double()
    rng = np.random.default_rng([seed, 31])
    x = torch.as_tensor(rng.standard_normal((batch, input_dim)), dtype=torch.float64)
    y = torch.as_tensor(rng.integers(0, 2, size=batch), dtype=torch.float64)
    raw = rng.random((batch, domain_dim))
    dom = torch.as_tensor(raw / raw.sum(axis=1, keepdims=True), dtype=torch.float64)

    model.zero_grad()
    total = model.loss_terms(x, y, dom)["total"]
    total.backward()
    analytic = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

    max_err = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            grad = analytic[name].view(-1)
            for idx in range(flat.shape[0]):
                orig = flat[idx].item()
                flat[idx] = orig + step
                up = float(model.loss_terms(x, y, dom)["total"])
                flat[idx] = orig - step
                down = float(model.loss_terms(x, y, dom)["total"])
                flat[idx] = orig
                fd = (up - down) / (2 * step)
                a = float(grad[idx])
                err = abs(a - fd) / (max(abs(a), abs(fd)) + 1e-6)
                max_err = max(max_err, err)
    return max_err
