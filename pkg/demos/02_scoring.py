"""Scoring a two-speaker hypothesis with WER, cpWER and DER."""

from talkturn import SpeakerSegment, compute_cpwer, compute_der, compute_wer, parse_labeled_text
from talkturn.metrics import filler_hit_rate, normalize_text, wer_alignment
from talkturn.transcript import SpeakerLabel

ref = parse_labeled_text("[S1] we gaan om 3 uur naar de Gamma [S2] uhm ja dat is goed")
hyp = parse_labeled_text("[S2] we gaan om drie uur naar gamma [S1] ja dat is goed hoor")

# %% Normalisation: lowercase, no punctuation, Dutch number words
print(normalize_text("Om 3 uur, in 2023!"))

# %% Plain WER ignores who said what
plain = lambda turns: " ".join(t.text for t in turns)  # noqa: E731
print("WER", compute_wer(plain(ref), plain(hyp)).as_dict())

# %% cpWER finds the best speaker pairing; the swapped labels cost nothing here
counts, pairs = compute_cpwer(ref, hyp)
print("cpWER", round(counts.wer, 3), [(str(r), str(h)) for r, h in pairs])

# %% Filler behaviour from the alignment
stats = filler_hit_rate([wer_alignment(plain(ref), plain(hyp))], fillers=["uhm", "ja"])
print({k: (v.occurrences, v.hits) for k, v in stats.items()})

# %% DER with a 250 ms collar and the optimal label mapping
S = SpeakerLabel.canonical
ref_segs = [SpeakerSegment("a", S(1), 0.0, 4.0), SpeakerSegment("a", S(2), 4.0, 7.0)]
hyp_segs = [SpeakerSegment("a", S(2), 0.1, 4.3), SpeakerSegment("a", S(1), 4.3, 6.5)]
for collar in (0.0, 0.25):
    d = compute_der(ref_segs, hyp_segs, collar_s=collar)
    print(f"collar {collar}: DER {d.der:.3f} (miss {d.missed:.2f}, fa {d.false_alarm:.2f}, conf {d.confusion:.2f})")
