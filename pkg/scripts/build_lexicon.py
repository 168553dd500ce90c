"""Regenerate the embedded lexicon from the CMU pronouncing dictionary.

Writes src/voiceadapt/data/lexicon.txt (``WORD  PH1 PH2 ...``, variants as
``WORD(2)``) and src/voiceadapt/data/cnc_words.txt (the CNC test words, one
per line, list number first).  Needs the optional ``cmudict`` package.
"""

from pathlib import Path

import cmudict

DATA = Path(__file__).resolve().parents[1] / "src" / "voiceadapt" / "data"

# four 50-word consonant-nucleus-consonant test lists
CNC_LISTS = [
    "bean boat burn chalk choice death dime door fall fat gap goose hash home hurl jail jar keen king "
    "kite knock laud limb lot love met mode moon nag page pool puff rag raid raise reach sell shout "
    "size sub take tape thumb tough turn vine week which whip yes",
    "bite book bought calm chair chief dab dead deep fail far gaze gin goal hate haze hush juice keg "
    "learn live loaf lore match merge mill nice numb pad pick pike rain read room rot said shack shawl "
    "soap south thought ton tool tell thin void walk wire wheat youth",
    "bar base beg cause chat cheek cool date ditch dodge five germ good gun half hire hit jug late lid "
    "life luck mess mop mouse name note pain pearl phone pole rat ring road rush search seize shall "
    "sheep soup talk team tip wag when wife witch young",
    "back bath bone came chain check dip dog doll fit food gas get hall have hole join judge kill kick "
    "lean lease long lose make mob mood near neat pass peg perch red ripe rose rough sail shirt should "
    "sour such tire wash yearn thing vote hurt",
]

HOMOPHONES = (
    "flour flower knight night write right rite sea see their there two too to pair pear pare "
    "bare bear hear here weak week whole hole one won son sun tail tale mail male meat meet "
    "road rode rowed sale sail peace piece plain plane rain reign rein red read knows nose "
    "wait weight wood would hour our made maid not knot by buy bye cash dash mash rash bash "
    "cat hat bat sat mat fish dish wish cap map tap"
)


def main():
    d = cmudict.dict()
    words = []
    for lst in CNC_LISTS:
        words += lst.split()
    extra = HOMOPHONES.split()
    missing = [w for w in words + extra if w not in d]
    if missing:
        raise SystemExit(f"not in cmudict: {missing}")
    vocab = sorted(set(words) | set(extra))
    lines = []
    for w in vocab:
        for i, pron in enumerate(d[w]):
            key = w.upper() if i == 0 else f"{w.upper()}({i + 1})"
            lines.append(f"{key}  {' '.join(pron)}")
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "lexicon.txt").write_text("\n".join(lines) + "\n")
    seen, cnc = set(), []
    for k, lst in enumerate(CNC_LISTS, start=1):
        for w in lst.split():
            if w not in seen:
                seen.add(w)
                cnc.append(f"{k} {w}")
    (DATA / "cnc_words.txt").write_text("\n".join(cnc) + "\n")
    print(f"{len(vocab)} words, {len(lines)} pronunciations, {len(cnc)} CNC words")


if __name__ == "__main__":
    main()
