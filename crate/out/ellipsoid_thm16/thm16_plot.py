# generated; plots value and prediction against t for each table
import csv, os, sys
import matplotlib.pyplot as plt

TABLES = [
    "thm16_thm16.csv",
    "thm16_thm16_halved.csv",
]

here = os.path.dirname(os.path.abspath(sys.argv[0]))
for name in TABLES:
with open(os.path.join(here, name)) as fh:
rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
plt.figure()
plt.semilogx(t, [float(r["value_re"]) for r in rows], "o-", label="value")
plt.semilogx(t, [float(r["predicted_re"]) for r in rows], "--", label="predicted")
plt.xlabel("t")
plt.title(name)
plt.legend()
plt.savefig(os.path.join(here, name.replace(".csv", ".png")))
