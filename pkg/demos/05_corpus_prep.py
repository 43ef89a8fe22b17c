"""From time-stamped utterances to (prompt, target) training pairs."""

from talkturn import Utterance, prepare_corpus

utts = [
    Utterance("gesprek1", "spkB", 0.0, 2.4, "hoi, hoe gaat het"),
    Utterance("gesprek1", "spkA", 2.6, 4.0, "goed. en met jou?"),
    Utterance("gesprek1", "spkB", 4.1, 6.0, "xxx"),
    Utterance("gesprek1", "spkB", 6.2, 29.0, "ja prima, we gaan straks naar de markt"),
    Utterance("gesprek1", "spkC", 31.0, 33.0, "mag ik mee"),
    Utterance("gesprek1", "spkA", 33.5, 40.0, "natuurlijk"),
]

samples, report = prepare_corpus(utts, dropout_rate=0.2, seed=0)

# %% Speakers are renamed by order of appearance; unintelligible markers are dropped
print(report.speaker_maps, "dropped markers:", report.n_dropped_markers)

# %% Each chunk becomes one sample whose prompt carries the previous chunks
for s in samples:
    flag = " (context dropped)" if s.context_dropped else ""
    print(f"#{s.chunk_index}{flag}\n  prompt: {s.prompt}\n  target: {s.target}")
