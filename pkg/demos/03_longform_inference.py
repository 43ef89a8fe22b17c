"""Chunked long-form transcription against a scripted engine.

Audio is cut into <=30 s windows. Every chunk's reply is appended to the
context that prompts the next chunk, which is how a label mistake can
travel forward in time.
"""

from talkturn import MockEngine, TimedWord, plan_chunks, run_longform
from talkturn.harness import detect_degenerate_timestamps

# %% Chunk plans: fixed windows, or snapped to silences found by a VAD
print(plan_chunks(75).windows)
print(plan_chunks(70, [(0, 24), (26, 52), (55, 70)]).windows)

# %% Four chunks; the third reply uses an unseen name as its label
replies = ["[S1] hallo [S2] hoi", "[S1] hoe is het", "[Judith] prima", "ja hoor [S2] mooi"]
engine = MockEngine(replies)
result = run_longform("demo.wav", plan_chunks(120), engine, mode="d")

for req in engine.requests:
    print(f"chunk {req.id} @ {req.offset_s:>5}s  prompt: {req.prompt!r}")
print(result.transcript())
print("labels:", result.stats.per_label, "OOV fraction", result.stats.oov_fraction)

# %% Mode "a" sends no prompt at all; the replies are unchanged, only conditioning differs
plain = MockEngine(replies)
run_longform("demo.wav", plan_chunks(120), plain, mode="a")
print([r.prompt for r in plain.requests])

# %% Word timestamps that collapse onto a single instant are flagged
words = [TimedWord(w, 12.0, 12.1) for w in "een twee drie vier".split()]
print(detect_degenerate_timestamps(words))
