#!/usr/bin/env python3
"""Generate the bundled desk-scale corpus of parliamentary-style English sentences.

The output is deterministic for a given --seed. Sentences follow a small set of
phrase templates with subject/verb agreement so that inflection and function-word
errors are recoverable from context.

    python3 tools/make_desk_corpus.py --out data/desk_corpus.txt --count 4000
"""

import argparse
import random

SINGULAR = [
    "the commission", "the council", "the parliament", "this house", "the rapporteur",
    "the committee", "the presidency", "the european union", "the government", "the minister",
    "the commissioner", "the court of auditors", "the central bank", "my group", "the agency",
    "the report", "this proposal", "the directive", "the regulation", "the treaty",
]
PLURAL = [
    "the member states", "the citizens", "our colleagues", "we", "the farmers", "the fishermen",
    "many members", "the institutions", "the consumers", "the workers", "national parliaments",
    "the regions", "small businesses", "the groups", "the candidate countries",
]
MODALS = ["must", "should", "will", "can", "cannot", "would", "may"]
# base, third person singular, past participle
VERBS = [
    ("support", "supports", "supported"), ("adopt", "adopts", "adopted"), ("reject", "rejects", "rejected"),
    ("welcome", "welcomes", "welcomed"), ("examine", "examines", "examined"), ("consider", "considers", "considered"),
    ("approve", "approves", "approved"), ("improve", "improves", "improved"), ("protect", "protects", "protected"),
    ("strengthen", "strengthens", "strengthened"), ("accept", "accepts", "accepted"), ("propose", "proposes", "proposed"),
    ("present", "presents", "presented"), ("implement", "implements", "implemented"), ("review", "reviews", "reviewed"),
    ("discuss", "discusses", "discussed"), ("finance", "finances", "financed"), ("monitor", "monitors", "monitored"),
    ("promote", "promotes", "promoted"), ("ensure", "ensures", "ensured"), ("take", "takes", "taken"),
    ("give", "gives", "given"), ("make", "makes", "made"), ("see", "sees", "seen"), ("know", "knows", "known"),
    ("defend", "defends", "defended"), ("amend", "amends", "amended"), ("oppose", "opposes", "opposed"),
    ("need", "needs", "needed"), ("want", "wants", "wanted"), ("respect", "respects", "respected"),
    ("simplify", "simplifies", "simplified"), ("reform", "reforms", "reformed"), ("fund", "funds", "funded"),
]
TOPICS = [
    "fisheries", "agriculture", "transport", "the environment", "human rights", "energy policy",
    "public health", "food safety", "regional development", "the internal market", "employment",
    "climate change", "foreign policy", "research", "education", "immigration", "consumer protection",
    "competition", "the common currency", "social policy", "maritime safety", "air quality",
]
OBJECTS = [
    "the proposal", "this report", "the amendments", "the budget", "the resolution", "the agreement",
    "the new rules", "the programme", "the package", "the action plan", "the common position",
    "the framework", "the strategy", "the guidelines", "the compromise", "the motion",
]
PARTNERS = [
    "turkey", "russia", "china", "the united states", "ukraine", "morocco", "japan", "canada",
    "switzerland", "norway", "india", "brazil",
]
TIMES = [
    "tomorrow at noon", "on thursday", "at the end of the debate", "next week", "in strasbourg",
    "after the debate", "on wednesday", "during the next session",
]
ADJ = ["important", "difficult", "serious", "sensitive", "urgent", "complex"]
NOUNS = ["issue", "question", "matter", "problem", "subject"]
GROUPS = ["our citizens", "the farmers", "the regions", "small businesses", "the consumers", "all of us", "the union"]
PERIODS = ["week", "month", "year"]


def noun_phrase(rng):
    kind = rng.random()
    if kind < 0.45:
        return rng.choice(OBJECTS)
    if kind < 0.8:
        return f"{rng.choice(OBJECTS)} on {rng.choice(TOPICS)}"
    return f"{rng.choice(OBJECTS)} with {rng.choice(PARTNERS)}"


def subject(rng):
    if rng.random() < 0.55:
        return rng.choice(SINGULAR), True
    return rng.choice(PLURAL), False


def sentence(rng):
    t = rng.randrange(13)
    base, third, part = rng.choice(VERBS)
    if t == 0:
        s, sing = subject(rng)
        return f"{s} {third if sing else base} {noun_phrase(rng)} ."
    if t == 1:
        s, _ = subject(rng)
        return f"{s} {rng.choice(MODALS)} {base} {noun_phrase(rng)} ."
    if t == 2:
        s, sing = subject(rng)
        return f"{s} {'has' if sing else 'have'} {part} {noun_phrase(rng)} ."
    if t == 3:
        pron = rng.choice(["his", "her"])
        return f"i would like to thank the rapporteur for {pron} excellent work on {rng.choice(TOPICS)} ."
    if t == 4:
        return f"it gives me great pleasure to {base} {noun_phrase(rng)} ."
    if t == 5:
        s, sing = subject(rng)
        return f"mr president , {s} {third if sing else base} {noun_phrase(rng)} ."
    if t == 6:
        return f"this is a very {rng.choice(ADJ)} {rng.choice(NOUNS)} for {rng.choice(GROUPS)} ."
    if t == 7:
        return f"the vote will take place {rng.choice(TIMES)} ."
    if t == 8:
        s, sing = subject(rng)
        return f"{s} {'is' if sing else 'are'} ready to {base} {noun_phrase(rng)} ."
    if t == 9:
        who = rng.choice(["the commissioner", "the rapporteur", "the previous speaker", "the council", "my colleague"])
        return f"i {rng.choice(['agree', 'disagree'])} with {who} on {rng.choice(TOPICS)} ."
    if t == 10:
        s, sing = subject(rng)
        return f"{s} {'was' if sing else 'were'} {part} last {rng.choice(PERIODS)} ."
    if t == 11:
        s, sing = subject(rng)
        return (f"{s} {third if sing else base} {noun_phrase(rng)} because it "
                f"{'is' if rng.random() < 0.5 else 'was'} {rng.choice(['necessary', 'important', 'urgent'])} .")
    s, _ = subject(rng)
    return f"we {rng.choice(MODALS)} {base} {noun_phrase(rng)} and {s} {rng.choice(MODALS)} {rng.choice(VERBS)[0]} {rng.choice(OBJECTS)} ."


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=2022)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    seen = set()
    with open(args.out, "w", encoding="utf-8") as f:
        while len(seen) < args.count:
            s = sentence(rng)
            if s in seen:
                continue
            seen.add(s)
            f.write(s + "\n")


if __name__ == "__main__":
    main()
