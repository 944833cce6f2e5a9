use super::{rank_order, FusedQuery, IndexError, RetrievalResult};
use crate::scalar::Scalar;

/// Reference ranking: scores every entry, sorts by `(-fused_score, id)` and
/// truncates to `k`.
///
/// Takes raw `(id, image, text)` triples so it does not depend on how an
/// index stores or searches its entries. Used as ground truth in tests.
pub fn query_exact_oracle<'a, S, I>(
    entries: I,
    q: &FusedQuery<S>,
) -> Result<RetrievalResult<S>, IndexError>
where
    S: Scalar,
    I: IntoIterator<Item = (&'a str, &'a [S], &'a [S])>,
{
    let mut all = Vec::new();
    let mut any = false;
    for (id, image, text) in entries {
        any = true;
        if q.excluded().contains(id) {
            continue;
        }
        let mut r = q.score(image, text);
        r.record_id = id.to_string();
        all.push(r);
    }
    if !any {
        return Err(IndexError::EmptyIndex);
    }
    all.sort_by(rank_order);
    all.truncate(q.k());
    Ok(RetrievalResult { ranked: all })
}
