"""Smoke test for the nowcast extension module.

Build and install first:  maturin develop -m crates/py/Cargo.toml  (or pip install a built wheel)
"""

import math
import tempfile
from pathlib import Path

import nowcast


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg_path = nowcast.simulate(str(tmp / "fx"), seed=3, stocks=80, days=60)
        cfg = nowcast.RunConfig.load(cfg_path)
        cfg.out = str(tmp / "report")
        cfg.perms = 99
        cfg.rank_repetitions = 3
        cfg.groups = 5
        cfg.horizons = ["1d", "1w"]
        cfg.validate()

        bundle = nowcast.run_pipeline(cfg)
        assert "regress.csv" in bundle.files, bundle.files
        assert len(bundle.bundle_sha256) == 64
        again = nowcast.run_pipeline(cfg)
        assert again.bundle_sha256 == bundle.bundle_sha256

        bt = nowcast.backtest(cfg, tier="top", horizon="1d")
        assert len(bt.dates) == len(bt.raw_return) == 58
        assert all(0.0 <= t <= 1.0 for t in bt.turnover)
        for _, members in bt.snapshots:
            assert math.isclose(sum(w for _, w in members), 1.0, rel_tol=1e-12)

        (ff6,) = nowcast.regress(cfg, specs=["ff6"])
        assert ff6.terms[0] == "alpha" and ff6.nobs == 58
        assert abs(ff6.alpha_t) < 50

        groups = nowcast.group_backtest(cfg, groups=5)
        assert len(groups) == 5

        battery = nowcast.consistency_battery(str(tmp / "fx" / "repeated.csv"), perms=99, rank_repetitions=3)
        assert 0.0 < battery["permutation_p"] <= 1.0

    coef, se = nowcast.ols_nw([1.0, 2.0, 2.9, 4.2, 5.0, 5.8], [[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]], lag=1)
    assert abs(coef[1] - 0.98) < 0.1 and se[1] > 0
    assert nowcast.cost_drag_bps(0.574, 1.63) < 1.84
    assert math.isclose(nowcast.spread_bps(99.99, 100.01), 2.0, rel_tol=1e-9)
    d, p = nowcast.ks_two_sample([0.1, 0.2, 0.3], [0.15, 0.25, 0.35])
    assert 0 <= d <= 1 and 0 <= p <= 1
    assert math.isclose(nowcast.spearman([1, 2, 3], [10, 20, 30]), 1.0)
    assert all(math.isclose(a, b) for a, b in zip(nowcast.cumulative_index([0.1, -0.1]), [100.0, 110.0, 99.0]))
    assert nowcast.derive_seed(1, "a") != nowcast.derive_seed(1, "b")
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
