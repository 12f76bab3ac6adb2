"""Writes data/figurativeqa_standin.jsonl: a schema-conformant dataset with
the published per-split yes/no counts, built from templates with a fixed
seed. Contexts are synthetic; only the counts matter."""

import json
import random
from pathlib import Path

COUNTS = [
    ("amazon", "figurative", 77, 73),
    ("amazon", "non_figurative", 76, 74),
    ("yelp", "figurative", 174, 176),
    ("yelp", "non_figurative", 175, 175),
]

ITEMS = {
    "amazon": ["blender", "phone case", "backpack", "kettle", "headset", "lamp", "charger", "mattress"],
    "yelp": ["burger", "pizza", "soup", "taco", "steak", "latte", "curry", "pastry"],
}

FIG_GOOD = [
    ("The {item} is as tough as nails.", "The {item} is very durable."),
    ("This {item} runs like a dream.", "This {item} works very well."),
    ("The {item} was heaven on a plate.", "The {item} was excellent."),
    ("That {item} is worth its weight in gold.", "That {item} is very valuable."),
]
FIG_BAD = [
    ("The {item} fell apart like wet paper.", "The {item} broke easily."),
    ("This {item} is as useful as a chocolate teapot.", "This {item} is useless."),
    ("The {item} tasted like cardboard.", "The {item} tasted bland."),
    ("That {item} was a total lemon.", "That {item} was defective."),
]
LIT_GOOD = ["The {item} works well and I would buy it again.", "The {item} was fresh and well made."]
LIT_BAD = ["The {item} stopped working after a week.", "The {item} was cold and overpriced."]
QUESTIONS = ["Is the {item} good?", "Would you recommend the {item}?", "Was the {item} satisfying?"]


def main() -> None:
    rng = random.Random(20240601)
    out = []
    for source, split, n_yes, n_no in COUNTS:
        answers = ["yes"] * n_yes + ["no"] * n_no
        rng.shuffle(answers)
        tag = "fig" if split == "figurative" else "lit"
        for i, answer in enumerate(answers):
            item = rng.choice(ITEMS[source])
            rec = {
                "id": f"{source}-{tag}-{i:03d}",
                "source": source,
                "split": split,
            }
            if split == "figurative":
                ctx, literal = rng.choice(FIG_GOOD if answer == "yes" else FIG_BAD)
                rec["context"] = ctx.format(item=item)
                rec["question"] = rng.choice(QUESTIONS).format(item=item)
                rec["gold_answer"] = answer
                rec["manual_literal_context"] = literal.format(item=item)
                rec["figurativeness_scores"] = [rng.choice([3, 4]), 4, rng.choice([3, 4])]
            else:
                ctx = rng.choice(LIT_GOOD if answer == "yes" else LIT_BAD)
                rec["context"] = ctx.format(item=item)
                rec["question"] = rng.choice(QUESTIONS).format(item=item)
                rec["gold_answer"] = answer
                rec["figurativeness_scores"] = [rng.choice([1, 2]), 1, rng.choice([1, 2])]
            out.append(rec)
    path = Path(__file__).resolve().parent.parent / "data" / "figurativeqa_standin.jsonl"
    with path.open("w", encoding="utf-8") as f:
        for rec in out:
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
