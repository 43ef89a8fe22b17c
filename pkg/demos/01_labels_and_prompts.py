"""Speaker-labelled text: parsing, cleaning and prompt construction.

A transcript is one string in which bracketed speaker labels mark turns.
Below we take a noisy model reply apart, then build the prompt that would
condition the next 30 s chunk.
"""

from talkturn import compose_prompt, make_task_prompt, parse_labeled_text, strip_annotations
from talkturn.prompting import PromptConfig, count_tokens, truncate_context_left
from talkturn.transcript import canonical_relabel, render_labeled_text

reply = "ok dan [S2] Hoi, hoe gaat het? [S1] Goed [lacht] en met jou? [Judith] ja hoor [S3]"

# %% Turns and label kinds
turns = parse_labeled_text(reply)
for t in turns:
    kind = "unlabeled" if t.label.is_unlabeled else ("oov" if t.label.is_oov else "canonical")
    print(f"{str(t.label):>10}  {kind:<9}  {t.text!r}")

# %% "[lacht]" sits inside a turn, so it is parsed as an OOV label.
# Annotations only disappear when stripped from turn text explicitly.
print(strip_annotations("Goed (lacht) en *ehm* met jou?"))

# %% Relabelling by first appearance makes hypotheses comparable to S1..S5
relabelled, mapping = canonical_relabel(parse_labeled_text("[S4] a [S2] b [S4] c"))
print(render_labeled_text(relabelled), {str(k): str(v) for k, v in mapping.items()})

# %% The task prompt advertises the label vocabulary
task = make_task_prompt()
print(task, "->", count_tokens(task), "tokens")

# %% Left truncation keeps the newest context and re-opens it with a label
history = " ".join(f"[S{1 + i % 2}] " + "woord " * 30 for i in range(12))
config = PromptConfig(prompt_budget=40)
prompt = compose_prompt(task, history, config)
print(count_tokens(prompt), "tokens:", prompt[:90], "...")
print(truncate_context_left("[S1] een twee drie vier [S2] vijf zes", 5))
