#!/usr/bin/env python3
"""Regenerates the committed fixtures.

    python3 fixtures/make_fixtures.py

Writes the scripted end-to-end corpus under fixtures/e2e/ and the
statistics fixtures under fixtures/stats/. Expected values are computed
here with mpmath at 50 digits, independently of the Rust code.
"""

import json
import math
import random
import unicodedata
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50

ROOT = Path(__file__).resolve().parent
PROMPTS = ROOT.parent / "crates" / "core" / "prompts"
EPSILON = "উত্তরহীন"


def nfc(s):
    return unicodedata.normalize("NFC", s)


def template(component):
    return json.loads((PROMPTS / f"{component}.json").read_text(encoding="utf-8"))


def render(component, **bindings):
    user = template(component)["user"]
    for k, v in bindings.items():
        user = user.replace("{" + k + "}", v)
    return nfc(user)


def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- e2e corpus

DENGUE_DOC = (
    "আমার ১০ . ০৯ . ১৯ তারিখ থেকে ডেঙ্গু জ্বর হইছে। আজকে ১০ দিন হল। এনএস১ পজিটিভ আসছে। "
    "এর পর থেকে প্লাটিলেট কমে যাচ্ছিল। গত ৩ দিন যাবত প্লাটিলেট বাড়ছে। সর্বশেষ আজকের রিপোর্টে "
    "১৫০০০০ আসছে। আমার শরীর কিছুটা দুর্বল। এছাড়া আর তেমন কোন সমস্যা নেই। আমি কখন বুঝতে পারব "
    "যে আমার ডেঙ্গু জ্বর ভাল হয়ে গেছে। আমার কি আর সিভিসি টেস্ট করার দরকার আছে?"
)
DENGUE_SUM = (
    "আমার ১০ . ০৯ . ১৯ তারিখ থেকে ডেঙ্গু জ্বর , আজকে ১০ দিন হল। এনএস ১ পজিটিভ আসছে। "
    "প্লাটিলেট কমে যাচ্ছিল , ৩ দিন যাবত প্লাটিলেট বাড়ছে। আজকের রিপোর্টে ১৫০০০০ আসছে। শরীর কিছুটা দুর্বল।"
)
CHAR_DOC = (
    "মানুষের সুন্দর মুখ দেখে আনন্দিত হয়ো না। স্বভাবে সে সুন্দর নয়, দেখতে সুন্দর হলেও তার স্বভাব, "
    "তার স্পর্শ, তার রীতিনীতিকে মানুষ ঘৃণা করে। দুঃস্বভাবের মানুষ মানুষের হৃদয়ে জ্বালা ও বেদনা দেয়। "
    "তার সুন্দর মুখে মানুষ তৃপ্তি পায় না।"
)
CHAR_SUM = "বাহ্যিক সৌন্দর্য নয়, স্বভাবের সৌন্দর্যই মানুষকে বিচারের মাপকাঠি।"

Q1 = "১০ . ০৯ . ১৯ তারিখ থেকে কোন জ্বর হয়েছে?"
Q2 = "কী কমে যাচ্ছিল?"
Q3 = "আমার কোন জ্বর হইছে?"
Q4 = "গত ৩ দিন যাবত কী বাড়ছে?"
Q5 = "কোন টেস্ট করার দরকার আছে কিনা জানতে চাওয়া হয়েছে?"
Q6 = "মানুষ কী দেখে আনন্দিত হয়?"

# 4-d unit vectors: axis 0 dengue, 1 platelet, 2 CBC, 3 everything else.
EMBEDDINGS = [
    ("ডেঙ্গু", ["ডেঙ্গু"], [[1.0, 0.0, 0.0, 0.0]]),
    ("প্লাটিলেট", ["প্লাটিলেট"], [[0.0, 1.0, 0.0, 0.0]]),
    ("সিভিসি", ["সিভিসি"], [[0.0, 0.0, 1.0, 0.0]]),
    ("প্লাটিলেট সংখ্যা", ["প্লাটিলেট", "সংখ্যা"], [[0.0, 0.8, 0.0, 0.6], [0.0, 0.0, 0.0, 1.0]]),
    ("রক্তকণিকা", ["রক্তকণিকা"], [[0.0, 0.6, 0.0, 0.8]]),
    ("ডেঙ্গু জ্বর", ["ডেঙ্গু", "জ্বর"], [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
    ("জানি না", ["জানি", "না"], [[0.0, 0.0, 0.0, 1.0], [0.6, 0.0, 0.0, 0.8]]),
    ("মুখ", ["মুখ"], [[0.0, 0.0, 0.0, 1.0]]),
    ("সুন্দর মুখ", ["সুন্দর", "মুখ"], [[0.6, 0.0, 0.0, 0.8], [0.0, 0.0, 0.0, 1.0]]),
]


def gen(component, user, text, logprobs, tokens=None):
    entry = {"component": component, "user": user, "text": nfc(text)}
    if tokens is not None:
        entry["tokens"] = [nfc(t) for t in tokens]
    entry["logprobs"] = logprobs
    return entry


def e2e():
    d, s = nfc(DENGUE_DOC), nfc(DENGUE_SUM)
    cd, cs = nfc(CHAR_DOC), nfc(CHAR_SUM)
    generate = [
        # candidate extraction; the document list repeats an entity and the
        # summary list carries a trailing danda, both removed by the parser
        gen("ner", render("ner", context=s), "ডেঙ্গু, প্লাটিলেট।", [-0.2]),
        gen("ner", render("ner", context=d), "ডেঙ্গু, প্লাটিলেট,\nসিভিসি, ডেঙ্গু", [-0.3]),
        # summary round trips
        gen("qg", render("qg", context=s, answer="ডেঙ্গু"), Q1, [-0.4]),
        gen("qa", render("qa", context=s, question=Q1), "ডেঙ্গু।", [-0.1]),
        gen("qg", render("qg", context=s, answer="প্লাটিলেট"), Q2, [-0.4]),
        gen("qa", render("qa", context=s, question=Q2), "প্লাটিলেট সংখ্যা", [-0.3]),
        # document round trips; the third comes back unrelated and is filtered
        gen("qg", render("qg", context=d, answer="ডেঙ্গু"), Q3, [-0.2]),
        gen("qa", render("qa", context=d, question=Q3), "ডেঙ্গু জ্বর", [-0.2]),
        gen("qg", render("qg", context=d, answer="প্লাটিলেট"), Q4, [-0.2]),
        gen("qa", render("qa", context=d, question=Q4), "প্লাটিলেট", [-0.2]),
        gen("qg", render("qg", context=d, answer="সিভিসি"), Q5, [-0.6]),
        gen("qa", render("qa", context=d, question=Q5), "জানি না", [-0.9]),
        # precision: summary questions answered against the document
        gen("qa", render("qa", context=d, question=Q1), "ডেঙ্গু", [-0.1]),
        gen("qa", render("qa", context=d, question=Q2), "রক্তকণিকা", [-0.7]),
        # weights
        gen("weighter", render("weighter", context=d, question=Q3), "0.9", [-0.1]),
        gen("weighter", render("weighter", context=d, question=Q4), "০.৩", [-0.1]),
        # answerability against the summary
        gen("qa", render("qa", context=s, question=Q3), "ডেঙ্গু জ্বর", [-0.1, -0.3], ["ডেঙ্গু", " জ্বর"]),
        gen("qa", render("qa", context=s, question=Q4), "প্লাটিলেট", [-0.5]),
        # second pair: nothing extractable from the summary
        gen("ner", render("ner", context=cs), "", [-0.05]),
        gen("ner", render("ner", context=cd), "মুখ", [-0.2]),
        gen("qg", render("qg", context=cd, answer="মুখ"), Q6, [-0.3]),
        gen("qa", render("qa", context=cd, question=Q6), "সুন্দর মুখ", [-0.2]),
        gen("weighter", render("weighter", context=cd, question=Q6), "গুরুত্ব: 1", [-0.1]),
        gen("qa", render("qa", context=cs, question=Q6), "সৌন্দর্য", [-1.0]),
    ]
    score = [
        {"component": "qa", "user": render("qa", context=s, question=Q3), "forced": EPSILON,
         "tokens": ["উত্তর", "হীন"], "logprobs": [-2.0, -1.0]},
        {"component": "qa", "user": render("qa", context=s, question=Q4), "forced": EPSILON,
         "tokens": ["উত্তর", "হীন"], "logprobs": [-2.5, -1.5]},
        {"component": "qa", "user": render("qa", context=cs, question=Q6), "forced": EPSILON,
         "tokens": ["উত্তর", "হীন"], "logprobs": [-0.4, 0.0]},
    ]
    embeddings = [{"text": nfc(t), "tokens": [nfc(x) for x in toks], "vectors": v} for t, toks, v in EMBEDDINGS]
    dump(ROOT / "e2e" / "script.json", {"generate": generate, "score": score, "embeddings": embeddings})

    pairs = [
        {"id": "dengue", "document": d, "summary": s, "human_score": 0.77, "source": "health-qa"},
        {"id": "character", "document": cd, "summary": cs, "human_score": 0.73, "source": "textbook"},
    ]
    with open(ROOT / "e2e" / "pairs.jsonl", "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p, ensure_ascii=False) + "\n")

    # Hand-worked values
    sig = lambda x: 1 / (1 + mp.e ** (-x))
    prec = (mp.mpf(1) + mp.mpf("0.6")) / 2
    ll = {
        "q3_answer": (mp.mpf("-0.1") + mp.mpf("-0.3")) / 2,
        "q3_unanswerable": (mp.mpf("-2.0") + mp.mpf("-1.0")) / 2,
        "q4_answer": mp.mpf("-0.5"),
        "q4_unanswerable": (mp.mpf("-2.5") + mp.mpf("-1.5")) / 2,
    }
    ans3 = sig(ll["q3_answer"] - ll["q3_unanswerable"])
    ans4 = sig(ll["q4_answer"] - ll["q4_unanswerable"])
    w3, w4 = mp.mpf("0.9"), mp.mpf("0.3")
    rec = (w3 * ans3 + w4 * ans4) / (w3 + w4)
    f1 = 2 * prec * rec / (prec + rec)

    ans6 = sig(mp.mpf("-1.0") - mp.mpf("-0.2"))
    expected = {
        "dengue": {
            "summary_candidates": ["ডেঙ্গু", "প্লাটিলেট"],
            "document_candidates": ["ডেঙ্গু", "প্লাটিলেট", "সিভিসি"],
            "roundtrip_similarity": {"summary": [1.0, 0.8], "document": [1.0, 1.0, 0.0]},
            "precision_similarity": [1.0, 0.6],
            "weights": [0.9, 0.3],
            "answerability": [float(ans3), float(ans4)],
            "precision": float(prec),
            "recall": float(rec),
            "f1": float(f1),
            "degenerate": False,
        },
        "character": {
            "summary_candidates": [],
            "document_candidates": ["মুখ"],
            "roundtrip_similarity": {"summary": [], "document": [1.0]},
            "precision_similarity": [],
            "weights": [1.0],
            "answerability": [float(ans6)],
            "precision": 0.0,
            "recall": float(ans6),
            "f1": 0.0,
            "degenerate": True,
        },
    }
    dump(ROOT / "e2e" / "expected.json", expected)
    return {"ans3": ans3, "ans4": ans4, "rec": rec, "f1": f1, "prec": prec, "ans6": ans6, "ll": ll}


# ------------------------------------------------------------ statistics


def ranks(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    r = [0] * len(v)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for k in order[i : j + 1]:
            r[k] = mp.mpf(i + j) / 2 + 1
        i = j + 1
    return r


def pearson(xs, ys):
    xs = [mp.mpf(x) for x in xs]
    ys = [mp.mpf(y) for y in ys]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / mp.sqrt(sxx * syy)


def t_p(r, n):
    df = n - 2
    t = r * mp.sqrt(df / (1 - r * r))
    return mp.betainc(mp.mpf(df) / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)


def kendall(xs, ys):
    n = len(xs)
    nc = nd = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (xs[i] > xs[j]) - (xs[i] < xs[j])
            dy = (ys[i] > ys[j]) - (ys[i] < ys[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                nc += 1
            else:
                nd += 1
    s = nc - nd
    tau = s / mp.sqrt((nc + nd + tx) * (nc + nd + ty))
    z = s / mp.sqrt(mp.mpf(n) * (n - 1) * (2 * n + 5) / 18)
    return tau, mp.erfc(abs(z) / mp.sqrt(2))


def reference(xs, ys):
    n = len(xs)
    r = pearson(xs, ys)
    rho = pearson(ranks(xs), ranks(ys))
    tau, tau_p = kendall(xs, ys)
    d = [mp.mpf(x) - mp.mpf(y) for x, y in zip(xs, ys)]
    return {
        "n": n,
        "pearson_r": float(r),
        "pearson_p": float(t_p(r, n)),
        "spearman_rho": float(rho),
        "spearman_p": float(t_p(rho, n)),
        "kendall_tau": float(tau),
        "kendall_p": float(tau_p),
        "r_squared": float(r * r),
        "mae": float(sum(abs(x) for x in d) / n),
        "rmse": float(mp.sqrt(sum(x * x for x in d) / n)),
        "l2_deviation": float(mp.sqrt(sum(x * x for x in d))),
    }


def stats():
    rng = random.Random(20240611)
    human, metric = [], []
    for _ in range(300):
        h = round(min(1.0, max(0.0, rng.gauss(0.7, 0.12))), 2)
        m = round(min(1.0, max(0.0, 0.8 * h + 0.14 + rng.gauss(0.0, 0.06))), 3)
        human.append(h)
        metric.append(m)
    dump(ROOT / "stats" / "synthetic_300.json", {"metric": metric, "human": human, "expected": reference(metric, human)})

    # small set with ties on both sides and a weak relation, so p-values are moderate
    small_metric = [0.61, 0.72, 0.72, 0.55, 0.80, 0.66, 0.59, 0.91, 0.72, 0.48]
    small_human = [0.70, 0.65, 0.80, 0.60, 0.75, 0.75, 0.50, 0.85, 0.62, 0.66]
    dump(ROOT / "stats" / "small_ties.json",
         {"metric": small_metric, "human": small_human, "expected": reference(small_metric, small_human)})

    with open(ROOT / "stats" / "results_300.jsonl", "w", encoding="utf-8") as f:
        for i, (m, h) in enumerate(zip(metric, human)):
            row = {"id": f"s{i:03d}", "precision": m, "recall": m, "f1": m, "degenerate": False,
                   "warnings_count": 0, "human_score": round(h * 5, 2)}
            f.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    v = e2e()
    stats()
    print("dengue precision", mp.nstr(v["prec"], 20))
    print("dengue recall   ", mp.nstr(v["rec"], 20))
    print("dengue f1       ", mp.nstr(v["f1"], 20))
    print("character recall", mp.nstr(v["ans6"], 20))
