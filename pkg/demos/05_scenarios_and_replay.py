"""
Scenario files and exact replays
================================

Scenarios are driven by flat ``key = value`` configs. Every CSV they write
carries the resolved config in its header, so a CSV can be used as the
config of a new run and reproduces the original byte for byte.
"""

import filecmp
import os
import tempfile

from sindycp.scenarios import load_config, parse_config, run_scenario

text = """
command = sweep-coefficients
coef_kinds = gamma
gamma_levels = 0.02, 0.05
realizations = 5
"""
cfg = parse_config(text)

with tempfile.TemporaryDirectory() as tmp:
    first = os.path.join(tmp, "first")
    res = run_scenario(cfg, first)
    for c in res.checks:
        print(("PASS" if c.passed else "FAIL"), c.name, "-", c.detail)

    # feed one of the outputs back in as the config
    replay_cfg = load_config(res.files[-1])
    second = os.path.join(tmp, "second")
    run_scenario(replay_cfg, second)
    names = sorted(os.listdir(first))
    _, mismatch, _ = filecmp.cmpfiles(first, second, names, shallow=False)
    print(f"replayed {len(names)} files, {len(mismatch)} differ")
