"""
Acceptance suite: one test per criterion, each printing a single
``CRITERION n: PASS|FAIL ...`` line. The training-based criteria share
module-scoped runs (2 fonts x 10 characters, batch 4, 200 steps, CPU).
"""

import math
import time

import numpy as np
import pytest
import torch

from fontgan import losses as L
from fontgan.glyphdata import (
    FontLabel,
    GlyphDataset,
    build_dataset,
    charset_from_text,
    load_glyph,
    sample_batch,
    save_glyph,
)
from fontgan.metrics import OcrConfig, evaluate, l1_metric, local_distortion, ms_ssim, style_label_error, train_ocr_proxy
from fontgan.networks import init_params, save_checkpoint
from fontgan.training import TrainConfig, pretrain_cpm, read_log, train

from .conftest import TOY_CHARS

RUN = dict(epochs=10, steps_per_epoch=20, batch_size=4, seed=0)


@pytest.fixture
def report(capsys, request):
    """Print one PASS/FAIL line for the criterion, visible in the test output."""
    state = {}

    def record(number, ok, detail):
        state.update(number=number, ok=bool(ok), detail=detail)
        return bool(ok)

    yield record
    if state:
        line = f"CRITERION {state['number']}: {'PASS' if state['ok'] else 'FAIL'} - {state['detail']}"
        with capsys.disabled():
            print("\n" + line)


# ----------------------------------------------------------------------------
# shared training runs
# ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cpm(tmp_path_factory, sans, mono):
    """Short content-prior pre-training on two structurally simple fonts."""
    root = tmp_path_factory.mktemp("cpm_data")
    build_dataset([(sans, FontLabel(0, "sans")), (mono, FontLabel(1, "mono"))],
                  charset_from_text(TOY_CHARS), root, split_ratio=0.8, seed=7)
    config = TrainConfig(epochs=2, steps_per_epoch=10, batch_size=4, seed=0,
                         checkpoint_dir=str(tmp_path_factory.mktemp("cpm_ck")))
    return pretrain_cpm(root, config)


class Runs:
    def __init__(self, toy, cpm, base):
        self.toy, self.cpm, self.base = toy, cpm, base
        self.cache = {}

    def get(self, name, **flags):
        if name not in self.cache:
            config = TrainConfig(**RUN, **flags, checkpoint_dir=str(self.base / name))
            start = time.perf_counter()
            result = train(self.toy, config, cpm=self.cpm if config.use_cpm else None)
            self.cache[name] = (result, time.perf_counter() - start, config)
        return self.cache[name]


@pytest.fixture(scope="module")
def runs(toy, cpm, tmp_path_factory):
    return Runs(toy, cpm, tmp_path_factory.mktemp("runs"))


def no_nan(records):
    return all(math.isfinite(v) for r in records for v in r.values() if isinstance(v, float))


# ----------------------------------------------------------------------------
# 1. analytic loss values
# ----------------------------------------------------------------------------

def test_criterion_1_analytic_loss_values(report):
    start = time.perf_counter()
    ones, d = torch.ones(4, 128), 128
    checks = {}
    for y in (0, 1, 5):
        checks[f"kl(y={y})"] = (float(L.kl_loss(y * ones, ones, y)), 0.0)
    checks["kl(mu=0.5)"] = (float(L.kl_loss(0.5 * ones, ones, 0)), 0.5 * 0.25 * d)
    y = torch.tensor([0.0, 1.0, 2.0, 3.0])
    checks["label(min)"] = (float(L.label_loss(torch.zeros(4, 128), y[:, None] * ones, y)), 0.0)
    img = torch.rand(4, 1, 64, 64) * 2 - 1
    code = torch.randn(4, 512, 2, 2)
    z = torch.randn(4, 128)
    checks["pixel(same)"] = (float(L.pixel_loss(img, img, img, img, img)), 0.0)
    checks["content(same)"] = (float(L.content_consistency_loss([code, code, code], (code, code))), 0.0)
    checks["regression(same)"] = (float(L.latent_regression_loss([z, z, z], (z, z))), 0.0)
    checks["prior(same)"] = (float(L.content_prior_loss(code, code)), 0.0)
    d_loss, g_loss = L.adversarial_losses(torch.zeros(4, 1, 4, 4), torch.zeros(4, 1, 4, 4))
    checks["d(0)"] = (float(d_loss), 2 * math.log(2))
    checks["g(0)"] = (float(g_loss), math.log(2))
    elapsed = time.perf_counter() - start
    bad = {k: v for k, (v, want) in checks.items() if abs(v - want) > 1e-6}
    ok = report(1, not bad and elapsed < 1.0, f"{len(checks) - len(bad)}/{len(checks)} values within 1e-6, "
                                              f"{elapsed:.3f}s; off: {bad}")
    assert ok


# ----------------------------------------------------------------------------
# 2. gradient checks
# ----------------------------------------------------------------------------

def _sp(x):
    return np.logaddexp(0.0, x)


def _m(a):
    return a.reshape(len(a), -1).mean(1).mean()


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _away(r, shape):
    v = r.normal(size=shape)
    return np.where(np.abs(v) < 0.05, 0.1 * np.sign(v + 1e-12), v)


def test_criterion_2_gradient_checks(report):
    start = time.perf_counter()
    r = np.random.default_rng(0)
    T = lambda a: torch.tensor(a, dtype=torch.float64)
    B = 3
    real, fake = r.normal(size=(B, 1, 4, 4)), r.normal(size=(B, 1, 4, 4))
    refY, refX, fY, fX, sY = (r.normal(size=(B, 1, 6, 6)) for _ in range(5))
    zcX, zcY = r.normal(size=(B, 8, 2, 2)), r.normal(size=(B, 8, 2, 2))
    reX, reY, reS = (r.normal(size=(B, 8, 2, 2)) for _ in range(3))
    mu, sigma, y = r.normal(size=(B, 6)), r.uniform(0.3, 2.0, (B, 6)), np.array([0.0, 1.0, 3.0])
    muX, muY = _away(r, (B, 6)), y[:, None] + _away(r, (B, 6))
    zX, zY = r.normal(size=(B, 6)), r.normal(size=(B, 6))
    eX, eY, eS = zX + _away(r, (B, 6)), zY + _away(r, (B, 6)), zY + _away(r, (B, 6))
    prior = r.normal(size=(B, 8, 2, 2))

    cases = {
        "adversarial_D": (lambda v: L.discriminator_loss(T(real), v),
                          lambda v: _m(_sp(-real)) + _m(_sp(v)), fake),
        "adversarial_G": (L.generator_adv_loss, lambda v: _m(_sp(-v)), fake),
        "pixel": (lambda v: L.pixel_loss(v, T(refY), T(sY), T(fX), T(refX)),
                  lambda v: _m((v - refY) ** 2) + _m((sY - refY) ** 2) + _m((fX - refX) ** 2), fY),
        "content": (lambda v: L.content_consistency_loss([v, T(reY), T(reS)], (T(zcX), T(zcY))),
                    lambda v: _m((v - zcY) ** 2) + _m((reY - zcX) ** 2) + _m((reS - zcX) ** 2), reX),
        "kl": (lambda v: L.kl_loss(T(mu), v, T(y)),
               lambda v: np.mean(0.5 * ((mu - y[:, None]) ** 2 + v ** 2 - np.log(v ** 2) - 1).sum(1)), sigma),
        "kl_mu": (lambda v: L.kl_loss(v, T(sigma), T(y)),
                  lambda v: np.mean(0.5 * ((v - y[:, None]) ** 2 + sigma ** 2 - np.log(sigma ** 2) - 1).sum(1)), mu),
        "label": (lambda v: L.label_loss(T(muX), v, T(y)),
                  lambda v: np.abs(muX).mean() + np.abs(v - y[:, None]).mean(), muY),
        "regression": (lambda v: L.latent_regression_loss([T(eX), v, T(eS)], (T(zX), T(zY))),
                       lambda v: _m(np.abs(eX - zX)) + _m(np.abs(v - zY)) + _m(np.abs(eS - zY)), eY),
        "prior": (lambda v: L.content_prior_loss(v, T(prior)), lambda v: _m((v - prior) ** 2), reY),
    }
    errors = {}
    for name, (torch_fn, np_fn, x) in cases.items():
        xt = T(x).requires_grad_(True)
        torch_fn(xt).backward()
        num = _fd(np_fn, x)
        errors[name] = float(np.abs(xt.grad.numpy() - num).max() / max(np.abs(num).max(), 1e-12))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = report(2, all(e <= 1e-4 for e in errors.values()) and elapsed < 30,
                f"{len(errors)} gradient checks, worst {worst} rel err {errors[worst]:.2e}, {elapsed:.2f}s")
    assert ok


# ----------------------------------------------------------------------------
# 3. shapes
# ----------------------------------------------------------------------------

def test_criterion_3_shape_suite(report):
    start = time.perf_counter()
    model = init_params(0)
    sizes = [1, 8] + list(np.random.default_rng(0).integers(2, 8, size=2))
    problems = []
    with torch.no_grad():
        for b in sizes:
            x = torch.rand(int(b), 1, 64, 64) * 2 - 1
            code, skips = model.E_c(x)
            dist = model.E_f(x)
            out_Y = model.G_Y(code, dist.mu, skips)
            out_X = model.G_X(code, dist.sigma, skips)
            logits = model.D_Y(x, out_Y)
            if code.shape != (b, 512, 2, 2) or len(skips) != 5:
                problems.append(f"encoder b={b}: {tuple(code.shape)}, {len(skips)} stages")
            if dist.mu.shape != (b, 128) or dist.sigma.shape != (b, 128):
                problems.append(f"style b={b}")
            for o in (out_X, out_Y):
                if o.shape != (b, 1, 64, 64) or o.min() < -1 or o.max() > 1:
                    problems.append(f"decoder b={b}")
            if logits.shape != (b, 1, 4, 4):
                problems.append(f"discriminator b={b}: {tuple(logits.shape)}")
    elapsed = time.perf_counter() - start
    ok = report(3, not problems and elapsed < 10,
                f"batch sizes {sorted(int(s) for s in sizes)}, {elapsed:.2f}s, problems: {problems or 'none'}")
    assert ok


# ----------------------------------------------------------------------------
# 4 + 5. overfit smoke test and style clustering
# ----------------------------------------------------------------------------

def test_criterion_4_overfit_smoke(runs, report):
    result, elapsed, _ = runs.get("A", use_fcm=True, use_cpm=True)
    recs = result.records
    first, last = recs[0]["pixel"], recs[-1]["pixel"]
    ok = report(4, len(recs) == 200 and last < 0.25 * first and no_nan(recs) and elapsed < 600,
                f"{len(recs)} steps, pixel {first:.4f} -> {last:.4f} ({last / first:.1%} of step 1), "
                f"finite={no_nan(recs)}, {elapsed:.0f}s")
    assert ok


def test_criterion_5_style_clustering(runs, toy, report):
    result, _, config = runs.get("A", use_fcm=True, use_cpm=True)
    before = style_label_error(init_params(config.seed), toy, "train")
    after = style_label_error(result.model, toy, "train")
    ratios = {y: after[y] / before[y] for y in before}
    ok = report(5, all(r < 0.5 for r in ratios.values()),
                "per-font mean|mu - y| " + ", ".join(
                    f"y={y}: {before[y]:.3f} -> {after[y]:.3f} ({ratios[y]:.0%})" for y in sorted(before)))
    assert ok


# ----------------------------------------------------------------------------
# 6. ablations
# ----------------------------------------------------------------------------

def test_criterion_6_ablation_contract(runs, report):
    b, _, _ = runs.get("B", use_fcm=False, use_cpm=True)
    c, _, _ = runs.get("C", use_fcm=True, use_cpm=False)
    fcm_terms = {"kl_source", "kl_target", "gan_sam", "d_sam"}
    b_keys = set().union(*b.records)
    c_keys = set().union(*c.records)
    checks = {
        "no-fcm drops kl/sampled": not fcm_terms & b_keys,
        "no-fcm keeps prior": "prior" in b_keys,
        "no-cpm drops prior": "prior" not in c_keys,
        "no-cpm keeps kl": fcm_terms <= c_keys,
        "both complete": len(b.records) == len(c.records) == 200,
        "no NaN": no_nan(b.records) and no_nan(c.records),
    }
    ok = report(6, all(checks.values()), ", ".join(f"{k}={v}" for k, v in checks.items()))
    assert ok


# ----------------------------------------------------------------------------
# 7. determinism and resume
# ----------------------------------------------------------------------------

def test_criterion_7_determinism(runs, toy, cpm, tmp_path, report):
    a, _, _ = runs.get("A", use_fcm=True, use_cpm=True)
    a2, _, _ = runs.get("A-repeat", use_fcm=True, use_cpm=True)
    identical = read_log(a.log_path) == read_log(a2.log_path)

    short = dict(RUN, epochs=2, steps_per_epoch=3)
    straight = train(toy, TrainConfig(**short, checkpoint_dir=str(tmp_path / "s")), cpm=cpm).records
    train(toy, TrainConfig(**{**short, "epochs": 1}, checkpoint_dir=str(tmp_path / "r")), cpm=cpm)
    resumed = train(toy, TrainConfig(**short, checkpoint_dir=str(tmp_path / "r")), cpm=cpm).records
    next_step_equal = resumed[3] == straight[3]
    ok = report(7, identical and next_step_equal and resumed == straight,
                f"repeat run logs identical={identical} ({len(a.records)} records); "
                f"resume at step 3 -> next-step report identical={next_step_equal}")
    assert ok


# ----------------------------------------------------------------------------
# 8. metric sanity
# ----------------------------------------------------------------------------

def test_criterion_8_metric_sanity(toy, report):
    start = time.perf_counter()
    x = toy.glyph(1, toy.manifest.train[0]).pixels
    shifted = np.ones_like(x)
    shifted[:, 3:] = x[:, :-3]
    r = np.random.default_rng(0)
    pairs = r.uniform(-1, 1, (1000, 2, 16, 16))
    axioms = all(
        l1_metric(a, a) == 0 and l1_metric(a, b) == l1_metric(b, a) and l1_metric(a, b) >= 0
        and l1_metric(a, b) <= l1_metric(a, c) + l1_metric(c, b) + 1e-12
        for (a, b), c in zip(pairs, r.uniform(-1, 1, (1000, 16, 16)))
    )
    checks = {
        "ms_ssim(x,x)": abs(ms_ssim(x, x) - 1.0) <= 1e-6,
        "ld(x,x)": local_distortion(x, x) == 0.0,
        "l1(x,x)": l1_metric(x, x) == 0.0,
    }
    ld3 = local_distortion(x, shifted)
    checks["ld(3px)"] = abs(ld3 - 3.0) <= 0.5
    checks["l1 axioms x1000"] = axioms
    elapsed = time.perf_counter() - start
    ok = report(8, all(checks.values()) and elapsed < 60,
                ", ".join(f"{k}={v}" for k, v in checks.items()) + f", LD(3px)={ld3:.3f}, {elapsed:.1f}s")
    assert ok


# ----------------------------------------------------------------------------
# 9. end-to-end evaluation protocol
# ----------------------------------------------------------------------------

def test_criterion_9_end_to_end(runs, toy, tmp_path, report):
    trained, _, config = runs.get("A", use_fcm=True, use_cpm=True)
    start = time.perf_counter()
    ocr = train_ocr_proxy(toy, OcrConfig(seed=0))
    untrained = tmp_path / "untrained.pt"
    save_checkpoint(untrained, init_params(config.seed), {"config_hash": config.hash})
    rep_trained = evaluate(trained.checkpoint, toy, "test", ocr)
    rep_untrained = evaluate(untrained, toy, "test", ocr)
    elapsed = time.perf_counter() - start
    l1_t = rep_trained.overall["destylization"].l1
    l1_u = rep_untrained.overall["destylization"].l1
    both = all(rep_trained.overall[d].n == len(toy.manifest.test) for d in ("stylization", "destylization"))
    ok = report(9, both and l1_t < l1_u and ocr.clean_accuracy >= 0.99 and elapsed < 300,
                f"both directions n={rep_trained.overall['stylization'].n}; de-stylization l1 trained {l1_t:.4f} "
                f"vs untrained {l1_u:.4f}; OCR clean accuracy {ocr.clean_accuracy:.3f}; {elapsed:.0f}s")
    print(rep_trained.table("stylization"))
    print(rep_trained.table("destylization"))
    assert ok


# ----------------------------------------------------------------------------
# 10. dataset invariants
# ----------------------------------------------------------------------------

def test_criterion_10_dataset_invariants(toy, tmp_path, report):
    start = time.perf_counter()
    m = toy.manifest
    disjoint = not set(m.train) & set(m.test)
    rng = np.random.default_rng(0)
    pairs_ok = True
    for i in range(1000):
        split = "train" if i % 2 == 0 else "test"
        for s in sample_batch(toy, 4, split, rng):
            try:
                s.check()
            except ValueError:
                pairs_ok = False
            pairs_ok &= s.source.char.glyph_id in m.split(split)
    in_range = all(g.min() >= 0 and g.max() <= 255 for g in toy.images.values()) and all(
        toy.glyph(y, gid).pixels.min() >= -1 and toy.glyph(y, gid).pixels.max() <= 1 for y, gid in toy.images)
    exact = True
    for (y, gid) in toy.images:
        g = toy.glyph(y, gid)
        save_glyph(tmp_path / "g.png", g)
        exact &= np.array_equal(load_glyph(tmp_path / "g.png"), g.pixels)
    reloaded = GlyphDataset.load(toy.root)
    exact &= all(np.array_equal(reloaded.images[k], v) for k, v in toy.images.items())
    elapsed = time.perf_counter() - start
    ok = report(10, disjoint and pairs_ok and in_range and exact and elapsed < 60,
                f"disjoint={disjoint}, 1000 batches ok={pairs_ok}, range ok={in_range}, "
                f"save/load exact={exact}, {elapsed:.1f}s")
    assert ok
