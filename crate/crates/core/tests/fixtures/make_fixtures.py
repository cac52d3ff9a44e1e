"""Regenerates the spreadsheet fixtures. Requires openpyxl.

    python3 crates/core/tests/fixtures/make_fixtures.py
"""

import csv
import pathlib

from openpyxl import Workbook

HERE = pathlib.Path(__file__).parent

HEADER = [
    "episode_id",
    "description",
    "jurisdiction",
    "year",
    "policy_type",
    "macro_conditions",
    "government_focus",
    "relevance_set",
]

THREE_ROWS = [
    [
        "uk-2010-vat",
        "Raise the standard rate of value added tax from 17.5% to 20% to reduce the structural deficit",
        "United Kingdom",
        2010,
        "fiscal",
        "post-crisis recovery, high deficit",
        "fiscal_balance; government_debt",
        "fiscal_balance;inflation;household_debt;income_inequality",
    ],
    [
        "de-2015-minwage",
        "Introduce a national statutory minimum wage of 8.50 euros per hour",
        "Germany",
        2015,
        "labour",
        "low unemployment, moderate growth",
        "income_inequality;poverty_rate",
        "unemployment;income_inequality;youth_unemployment",
    ],
    [
        "fr-2023-pension",
        "",
        "France",
        2023,
        "social",
        "",
        "government_debt",
        "",
    ],
]

# ok, unknown indicator, duplicate id, missing id, ok without annotations
MIXED_ROWS = [
    THREE_ROWS[0],
    ["x-unknown", "Expand rural broadband subsidies", "", "", "", "", "broadband_speed", ""],
    ["uk-2010-vat", "Duplicate of the first row", "", "", "", "", "", ""],
    [None, "Row without an identifier", "", "", "", "", "", ""],
    ["jp-2019-cts", "Raise the consumption tax from 8% to 10%", "Japan", 2019, "fiscal", "", "", ""],
]


def write_xlsx(name, header, rows):
    wb = Workbook()
    ws = wb.active
    ws.title = "episodes"
    ws.append(header)
    for r in rows:
        ws.append(r)
    wb.save(HERE / name)


def write_csv(name, header, rows):
    with open(HERE / name, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if c is None else c for c in r])


write_xlsx("three_rows.xlsx", HEADER, THREE_ROWS)
write_csv("three_rows.csv", HEADER, THREE_ROWS)
write_xlsx("mixed.xlsx", HEADER, MIXED_ROWS)
write_xlsx("header_only.xlsx", HEADER, [])
write_xlsx("missing_description.xlsx", ["episode_id", "policy_text"], [["a", "b"]])
