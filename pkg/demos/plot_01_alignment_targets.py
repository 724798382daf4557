"""
Training targets from an edit-distance alignment
=================================================

A recognised token is labelled correct when the alignment to the reference
matches it, and incorrect when it is a substitution or an insertion.
Deleted reference tokens produce no label because no hypothesis token exists.
"""

from confest.align import levenshtein_align, targets_from_alignment, word_error_rate

ref = ["A", "B", "C", "D."]
hyp = ["A", "C", "C", "D."]

# align and print each operation
ali = levenshtein_align(ref, hyp)
for op in ali.ops:
    r = ref[op.ref_index] if op.ref_index is not None else "-"
    h = hyp[op.hyp_index] if op.hyp_index is not None else "-"
    print(f"{op.kind.name:<10} {r:>3} {h:>3}")

# one target per hypothesis token
print("targets:", targets_from_alignment(ali, len(hyp)).tolist())

# a repeated word and a dropped word: two substitutions cost the same
# as an insertion plus a deletion, and the backtrace prefers substitutions
ref2 = "the cat sat on the mat".split()
hyp2 = "the cat sat sat on mat".split()
ali2 = levenshtein_align(ref2, hyp2)
print("targets:", targets_from_alignment(ali2, len(hyp2)).tolist())
print(word_error_rate(ref2, hyp2))
print("WER:", word_error_rate(ref2, hyp2).wer)
