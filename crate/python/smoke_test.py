"""End-to-end smoke test of the cogconn_py extension on a tiny synthetic dataset."""

import math
import sys
import tempfile
from pathlib import Path

import cogconn_py as cc


def main() -> int:
    config = cc.Config().with_overrides(
        [
            ("synth.seed", 3),
            ("synth.n_subjects", 3),
            ("synth.trials_per_subject", 10),
            ("synth.failure_rate", 0.4),
            ("synth.duration_min_s", 3.8),
            ("synth.duration_max_s", 4.2),
        ]
    )
    assert config.band("theta") == (4.0, 8.0), config.band("theta")

    trial = cc.synth_trial(0, 0, config)
    assert trial.n_channels == 64 and trial.sample_rate_hz == 256.0
    again = cc.synth_trial(0, 0, config)
    assert trial.channel(5) == again.channel(5), "synthesis is not deterministic"

    coh = cc.coherence(trial, "alpha", config)
    assert len(coh) == 64 and all(abs(coh[i][i] - 1.0) < 1e-12 for i in range(64))
    assert all(abs(coh[i][j] - coh[j][i]) < 1e-12 for i in range(64) for j in range(64))
    eig = cc.eigenvalues(trial, "alpha", config)
    assert abs(sum(eig) - 64.0) < 1e-6 and eig == sorted(eig, reverse=True)
    assert len(cc.log_power(trial, "gamma", config)) == 64
    std_apl, std_degree = cc.graph_spread(trial, "theta", 6.0, config)
    assert std_apl >= 0.0 and std_degree >= 0.0

    cells = cc.extract_trial(trial, config)
    assert len(cells) == 12
    assert {(f, len(v)) for f, _, v in cells} == {("connectivity_structure", 64), ("graph_variability", 8), ("log_power", 64)}

    assert cc.auc([0.9, 0.8, 0.1], [True, True, False]) == 1.0
    assert math.isclose(cc.wilcoxon_rank_sum([1.0, 2.0], [3.0, 4.0]), 1 / 3, rel_tol=1e-12)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        manifest = cc.synth_dataset(tmp / "data", config)
        trials = cc.load_trials(manifest)
        assert len(trials) == 30
        assert trials[0].channel(0) == trial.channel(0)
        skipped = cc.extract(manifest, tmp / "features.csv", config)
        assert skipped == []
        result = cc.evaluate(tmp / "features.csv", tmp / "report", "digit", config)
        for label in ("digit", "sentence"):
            auc, p = result[label]
            assert 0.0 <= auc <= 1.0 and 0.0 <= p <= 1.0
        assert (tmp / "report" / "report.csv").read_text() == result["table"]
        print(result["table"], end="")
        print(f"digit fusion AUC {result['digit'][0]:.4f}, sentence {result['sentence'][0]:.4f}")

    try:
        cc.Config("bands.alpha.lo_hz = 6")
    except ValueError as e:
        assert "alpha" in str(e)
    else:
        raise AssertionError("overlapping bands accepted")
    try:
        cc.load_trials("/nonexistent/manifest.csv")
    except OSError:
        pass
    else:
        raise AssertionError("missing manifest accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
