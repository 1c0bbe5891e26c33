from core_math.exceptions import DataError


def token_accuracy(hypotheses, references):
    """Share of reference positions whose word the hypothesis reproduces at the same index."""
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    total = sum(len(r) for r in references)
    if total == 0:
        raise DataError('token accuracy needs at least one reference word')
    hits = sum(
        sum(1 for h, r in zip(hyp, ref) if h == r)
        for hyp, ref in zip(hypotheses, references)
    )
    return hits / total
