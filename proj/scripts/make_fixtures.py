#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under data/fixtures.

Output is deterministic: rerunning produces byte-identical files.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "fixtures"

LAB_NOUNS = ["bloodwork", "blood", "lab", "tests", "orders", "results", "tubes", "sample", "vials", "panel"]
LAB_PLACES = ["lab station", "quest lab", "draw station", "lab", "quest"]
LAB_VERBS = ["draw", "test", "collect", "process"]
LAB_ADJ = ["fasting", "morning", "routine", "quest"]

THANK_NOUNS = ["kindness", "help", "support", "team", "patience", "care", "attention", "warmth"]
THANK_VERBS = ["appreciate", "thank", "value", "admire"]
THANK_ADJ = ["wonderful", "grateful", "thankful", "kind", "amazing", "thoughtful"]

LAB_TEMPLATES = [
    "please go to the {place} for your {adj} {noun} {verb}",
    "your {noun} from the {place} are ready",
    "we need to {verb} your {adj} {noun} at the {place}",
    "the {place} will {verb} the {noun} and send {noun2}",
    "bring your {noun} {noun2} to the {place} before the {verb}",
    "the {adj} {noun} {verb} is at the {place} today",
    "blood {verb} for the {adj} {noun} at {place}",
    "the {noun} and {noun2} need a {adj} blood draw",
]

THANK_TEMPLATES = [
    "thank you so much for your {noun} and {noun2}",
    "we {verb} the {adj} {noun} from your {noun2}",
    "i am so {adj} for the {noun} of the whole {noun2}",
    "you and the {noun} are {adj} and we {verb} it",
    "what {adj} {noun} you gave us , we {verb} your {noun2}",
    "so {adj} for your {noun} , thank you again",
    "we {verb} you and your {adj} {noun}",
    "the {noun} was {adj} , thanks for the {noun2}",
]


def fill(rng, template, nouns, places, verbs, adjs):
    n1, n2 = rng.sample(nouns, 2)
    return template.format(
        noun=n1, noun2=n2, place=rng.choice(places), verb=rng.choice(verbs), adj=rng.choice(adjs)
    )


def lab_sentence(rng):
    return fill(rng, rng.choice(LAB_TEMPLATES), LAB_NOUNS, LAB_PLACES, LAB_VERBS, LAB_ADJ)


def thank_sentence(rng):
    return fill(rng, rng.choice(THANK_TEMPLATES), THANK_NOUNS, THANK_NOUNS, THANK_VERBS, THANK_ADJ)


def capitalise(s):
    return s[0].upper() + s[1:] + "."


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


def toy_corpus():
    rng = random.Random(20240501)
    lines = []
    for i in range(2000):
        lines.append(capitalise(lab_sentence(rng) if i % 2 == 0 else thank_sentence(rng)))
    write_lines(OUT / "toy_corpus.txt", lines)

    held = random.Random(777)
    rows = []
    for i in range(200):
        theme = "lab" if i % 2 == 0 else "gratitude"
        rows.append({"theme": theme, "text": capitalise(lab_sentence(held) if theme == "lab" else thank_sentence(held))})
    write_jsonl(OUT / "toy_heldout.jsonl", rows)


# One cue family per combo: (author, variants). Each message concatenates cues.
CUES = {
    "PartnershipPatient_salutation": ("patient", ["Hello Dr. Lee,", "Hi Dr. Smith,", "Hello doctor,"]),
    "PartnershipPatient_signoff": ("patient", ["Best regards, Maria", "Sincerely, Tom", "Regards, Ana"]),
    "PartnershipPatient_Appreciation/Gratitude": (
        "patient",
        ["Thank you so much for your help.", "I really appreciate everything.", "Thanks a lot for the kindness."],
    ),
    "SDOH_EconomicStability": (
        "patient",
        ["I cannot afford the copay since losing my job.", "Money is tight and rent is due.",
         "My insurance lapsed and bills pile up."],
    ),
    "CareCoordinationPatient_None": (
        "patient",
        ["Can you send the referral to the clinic?", "Please reschedule my appointment to Friday.",
         "Could you fax the forms to my pharmacy?"],
    ),
    "SocioEmotionalBehaviour_None": (
        "patient",
        ["I feel so anxious and scared.", "I am worried and cannot sleep.", "This makes me nervous and upset."],
    ),
    "PartnershipProvider_salutation": ("provider", ["Dear Ms. Jones,", "Dear Mr. Brown,", "Dear patient,"]),
    "PartnershipProvider_Clinical Care": (
        "provider",
        ["Please take the medication twice daily with food.", "Keep the dressing dry and change it nightly.",
         "Increase the dose to two tablets at bedtime."],
    ),
    "PartnershipProvider_signoff": ("provider", ["Take care, Dr. Lee", "Warmly, Nurse Kim", "Cheers, Dr. Patel"]),
}

PATIENT_COMBOS = [c for c, (a, _) in CUES.items() if a == "patient"]
PROVIDER_COMBOS = [c for c, (a, _) in CUES.items() if a == "provider"]


def message_text(combos, rng):
    order = {"PartnershipPatient_salutation": 0, "PartnershipProvider_salutation": 0,
             "PartnershipPatient_signoff": 2, "PartnershipProvider_signoff": 2}
    parts = sorted(combos, key=lambda c: order.get(c, 1))
    return " ".join(rng.choice(CUES[c][1]) for c in parts)


def labeled_messages():
    rng = random.Random(64)
    rows = [{"id": "m001", "author": "patient", "text": "Hello Dr. Lee,", "labels": ["PartnershipPatient_salutation"]}]
    while len(rows) < 64:
        author = "patient" if len(rows) % 3 != 2 else "provider"
        pool = PATIENT_COMBOS if author == "patient" else PROVIDER_COMBOS
        combos = sorted(rng.sample(pool, rng.choice([1, 2, 2, 3])))
        rows.append({"id": "m%03d" % (len(rows) + 1), "author": author, "text": message_text(combos, rng),
                     "labels": combos})
    write_jsonl(OUT / "labeled_messages.jsonl", rows)


FILLER = [
    "i wanted to ask about the {w} from last week",
    "just checking in on the {w} when you get a chance",
    "quick note about the {w} we talked about",
    "following up on the {w} from my visit",
    "can we talk about the {w} next time",
]


def ablation_messages():
    # Short bodies with one theme word inside neutral filler; the label is the theme.
    rng = random.Random(99)
    rows = []
    lab_words = LAB_NOUNS + ["blood draw", "quest orders", "fasting tests"]
    thank_words = THANK_NOUNS + ["kindness and help", "wonderful team", "grateful thanks"]
    for i in range(120):
        lab = i % 2 == 0
        word = rng.choice(lab_words if lab else thank_words)
        text = capitalise(rng.choice(FILLER).format(w=word))
        label = "CareCoordinationPatient_None" if lab else "PartnershipPatient_Appreciation/Gratitude"
        rows.append({"id": "a%03d" % (i + 1), "author": rng.choice(["patient", "provider"]), "text": text,
                     "labels": [label]})
    write_jsonl(OUT / "ablation_messages.jsonl", rows)

    # Same text distribution; the label depends only on the author.
    rng = random.Random(100)
    rows = []
    for i in range(120):
        author = "patient" if i % 2 == 0 else "provider"
        text = capitalise(lab_sentence(rng) if rng.random() < 0.5 else thank_sentence(rng))
        label = "PartnershipPatient_signoff" if author == "patient" else "PartnershipProvider_signoff"
        rows.append({"id": "u%03d" % (i + 1), "author": author, "text": text, "labels": [label]})
    write_jsonl(OUT / "author_messages.jsonl", rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    toy_corpus()
    labeled_messages()
    ablation_messages()


if __name__ == "__main__":
    main()
