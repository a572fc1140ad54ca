"""Regenerates fixture20.json with the reference scorers.

Requires sacrebleu==2.6.0 and rouge-score==0.1.2. Run from this directory:
    python make_fixture.py
"""
import json

import sacrebleu
from rouge_score import rouge_scorer

PAIRS = [
    ("Only one student has a pet, and that student is 19 years old.",
     "Only one student has a pet, and that student is 19 years old."),
    ("One student owns a pet; the student is 19.",
     "Only one student has a pet, and that student is 19 years old."),
    ("The average project duration is 20 days.",
     "Across the three projects, the average duration is 20 days."),
    ("Alice, Dan and Eve are over 40 and work in London.",
     "Three employees over 40 work in London departments: Alice, Dan and Eve."),
    ("The Lions scored 91 points and the Bears scored 85.",
     "Two teams scored more than 80 points: the Lions with 91 and the Bears with 85."),
    ("No matching records were found.",
     "There are no employees in Paris older than 60."),
    ("Revenue grew by 12.5% in 2023, reaching $4.2M.",
     "In 2023 revenue rose 12.5 percent to 4.2 million dollars."),
    ("the cat sat on the mat",
     "The cat is sitting on the mat."),
    ("Sales peaked in Q3 (July-September) at 1,250 units.",
     "Sales peaked in the third quarter with 1,250 units sold."),
    ("Carol is the only employee in Sales.",
     "Carol, aged 52, is the sole member of the Sales department."),
    ("Project Cygnus cost the most at 1800.25.",
     "Cygnus was the most expensive project, costing 1800.25."),
    ("Borealis ran from February 1 to February 21, 2024.",
     "The Borealis project lasted 20 days, from 2024-02-01 to 2024-02-21."),
    ("Two departments are located in London: Research and Support.",
     "Research and Support are both based in London."),
    ("Bob is 38 years old and works in Research.",
     "Bob, who is 38, works in the Research department in London."),
    ("Totals: 3 projects, 5 employees, 3 departments.",
     "There are three projects, five employees and three departments in total."),
    ("The oldest employee is Dan (61).",
     "Dan is the oldest employee at 61 years of age."),
    ("Eve works in Support, which is located in London.",
     "Eve is in the Support department, based in London."),
    ("Average age: 47.4 years.",
     "The employees are 47.4 years old on average."),
    ("Apollo started on 2024-01-01 and ended on 2024-01-11.",
     "Apollo ran for ten days in January 2024."),
    ("It's the team's best season since 1998 -- wow!",
     "This is the team's best season since 1998."),
]


def main():
    scorer = rouge_scorer.RougeScorer(["rougeL"], use_stemmer=False)
    pairs = []
    for cand, ref in PAIRS:
        r = scorer.score(ref, cand)["rougeL"]
        pairs.append({
            "candidate": cand,
            "reference": ref,
            "bleu": sacrebleu.sentence_bleu(cand, [ref], use_effective_order=False).score,
            "sentence_bleu": sacrebleu.sentence_bleu(cand, [ref]).score,
            "rouge_l_precision": r.precision,
            "rouge_l_recall": r.recall,
            "rouge_l_f1": r.fmeasure,
        })
    corpus = sacrebleu.corpus_bleu([c for c, _ in PAIRS], [[r for _, r in PAIRS]])
    doc = {
        "generator": f"sacrebleu {sacrebleu.__version__}, rouge_score 0.1.2 rougeL (no stemmer)",
        "corpus_bleu": corpus.score,
        "pairs": pairs,
    }
    with open("fixture20.json", "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
