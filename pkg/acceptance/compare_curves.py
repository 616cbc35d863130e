"""Sandwich verdict for the trained separator network.

Reads the core curve CSV (lmmse and oracle rows) and the network curve
CSV, joins them per SIR level, and checks at each level that the
network MSE is at most 0.5 dB above the linear bound and no more than
two standard errors below the oracle bound.  The overall verdict
passes when at least three of the five levels satisfy both sides.

Usage: compare_curves.py <core_csv> <unet_csv> <results_md>
"""

import csv
import sys


def load(path):
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["estimator"], round(float(row["sir_db"]), 6))
            rows[key] = {
                "mse_db": float(row["mse_db"]),
                "stderr_db": float(row["stderr_db"]),
                "trials": int(row["trials"]),
            }
    return rows


def main(core_path, unet_path, out_path):
    core = load(core_path)
    unet = load(unet_path)
    sirs = sorted({sir for est, sir in unet if est == "unet"})
    if len(sirs) != 5:
        raise SystemExit(f"expected 5 network levels, found {sorted(sirs)}")

    lines = [
        "# Sandwich check on the window-256 block profile",
        "",
        "Desk-scale training run; bounds from the 1000-trial core sweep.",
        "Pass condition per level: unet <= lmmse + 0.5 dB and",
        "unet >= oracle - 2 * stderr(oracle).  Overall: >= 3 of 5 levels.",
        "",
        "| SIR dB | lmmse dB | oracle dB | unet dB | verdict |",
        "| ------ | -------- | --------- | ------- | ------- |",
    ]
    passed = 0
    for sir in sirs:
        lm = core[("lmmse", sir)]
        orc = core[("oracle", sir)]
        un = unet[("unet", sir)]
        ok_upper = un["mse_db"] <= lm["mse_db"] + 0.5
        ok_lower = un["mse_db"] >= orc["mse_db"] - 2.0 * orc["stderr_db"]
        verdict = "within" if (ok_upper and ok_lower) else (
            "above linear" if not ok_upper else "below oracle")
        passed += ok_upper and ok_lower
        lines.append(
            f"| {sir:+.0f} | {lm['mse_db']:.3f} | {orc['mse_db']:.3f} "
            f"| {un['mse_db']:.3f} | {verdict} |"
        )
        print(
            f"SIR {sir:+.0f} dB: unet {un['mse_db']:.3f}"
            f"  lmmse {lm['mse_db']:.3f}  oracle {orc['mse_db']:.3f}"
            f"  -> {verdict}"
        )

    overall = "PASS" if passed >= 3 else "FAIL"
    summary = f"[SECONDARY] U-Net sandwich: {overall} ({passed} of 5 levels within bounds)"
    print(summary)
    lines += ["", summary, ""]
    with open(out_path, "w") as fh:
        fh.write("\n".join(lines))


if __name__ == "__main__":
    main(*sys.argv[1:4])
