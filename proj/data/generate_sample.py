"""Writes sample_panel.csv: a synthetic three-region macro panel.

Monthly CPI and unemployment (HUR), quarterly GDP and a monthly oil price
for 2000-01..2020-12. The numbers are simulated, not real data.
"""

import csv
import pathlib

import numpy as np

REGIONS = {"USA": (12000.0, 4.5), "EA": (9000.0, 8.5), "JPN": (5000.0, 4.0)}
START_YEAR, YEARS = 2000, 21
T = 12 * YEARS


def month_label(i):
    return f"{START_YEAR + i // 12:04d}-{i % 12 + 1:02d}"


def main():
    rng = np.random.default_rng(20240601)

    # Oil: AR(1) in logs around 4 with the 2008 and 2020 collapses.
    log_oil = np.empty(T)
    log_oil[0] = 3.4
    for t in range(1, T):
        log_oil[t] = 4.0 + 0.97 * (log_oil[t - 1] - 4.0) + 0.07 * rng.standard_normal()
        if month_label(t) in ("2008-10", "2008-11", "2020-03", "2020-04"):
            log_oil[t] -= 0.3
    d_oil = np.diff(log_oil, prepend=log_oil[0])
    crisis = np.zeros(T)
    for t in range(T):
        label = month_label(t)
        if "2008-09" <= label <= "2009-12":
            crisis[t] = 1.0
        if "2020-03" <= label <= "2020-09":
            crisis[t] = 2.0

    rows = []
    for region, (gdp0, hur0) in REGIONS.items():
        infl = np.empty(T)
        infl[0] = 0.002
        for t in range(1, T):
            infl[t] = 0.002 + 0.6 * (infl[t - 1] - 0.002) + 0.01 * d_oil[t] + 0.0015 * rng.standard_normal()
        cpi = 100.0 * np.exp(np.cumsum(infl))

        hur = np.empty(T)
        hur[0] = hur0
        for t in range(1, T):
            hur[t] = hur0 + 0.96 * (hur[t - 1] - hur0) + 0.25 * crisis[t] + 0.08 * rng.standard_normal()

        growth = 0.0015 - 0.004 * crisis + 0.003 * rng.standard_normal(T)
        gdp = gdp0 * np.exp(np.cumsum(growth))

        for t in range(T):
            rows.append((month_label(t), region, "CPI", f"{cpi[t]:.4f}"))
            rows.append((month_label(t), region, "HUR", f"{hur[t]:.3f}"))
            if t % 3 == 0:
                rows.append((month_label(t), region, "GDP", f"{gdp[t]:.2f}"))
    for t in range(T):
        rows.append((month_label(t), "__COMMON__", "OIL", f"{np.exp(log_oil[t]):.3f}"))

    out = pathlib.Path(__file__).with_name("sample_panel.csv")
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "region", "variable", "value"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
