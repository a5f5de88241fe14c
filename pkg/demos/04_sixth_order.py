"""Why full sextuplet modification is impractical.

A sextuplet trace set has 64 subsets; one empty subset is enough to make it
unusable.  On natural tiles almost every trace set has an empty subset.
"""
from fractions import Fraction

from covermod.bench import sixth_order_report, sixth_order_survey
from covermod.corpus import natural_corpus
from covermod.cover_mod import embeddable_fraction

corpus = natural_corpus(240, 192)
rep = sixth_order_report(corpus[0].grid)[0]
print(corpus[0].name, "- usable keys:", rep["usable_keys"][:5],
      "- keys with an empty subset:", len(rep["keys_with_empty_subsets"]))

survey = sixth_order_survey(corpus)
print(f"images with no usable trace set: {survey['blocked_fraction']:.1%}")
print(f"capacity below 0.1% of pixels:    {survey['below_0.1pct']:.1%}")
print(f"largest capacity:                 {survey['capacity_max']:.2%} bits per pixel")

# Protecting all orders up to k with blocks of lcm(1..k) samples.
for k in range(2, 7):
    f = embeddable_fraction(k)
    print(f"k = {k}: embeddable fraction {f}" + ("" if f == Fraction(1) else f" = {float(f):.3f}"))
