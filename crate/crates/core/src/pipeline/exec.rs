//! Bounded parallel work with in-order commits.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `work(i)` for `i` in `start..end` with at most `concurrency` calls
/// in flight and hands results to `commit` in index order, in batches.
///
/// On failure, every result before the first failing index is still
/// committed; the error lists every failing index of the batch.
pub(crate) fn run_ordered<T, E, W, C, CE>(
    start: usize,
    end: usize,
    concurrency: usize,
    work: W,
    mut commit: C,
) -> Result<(), OrderedError<E, CE>>
where
    T: Send,
    E: Send,
    W: Fn(usize) -> Result<T, E> + Sync,
    C: FnMut(Vec<T>) -> Result<(), CE>,
{
    let concurrency = concurrency.max(1);
    // A few requests per worker per batch amortizes thread start-up without
    // letting a failure strand much finished work.
    let batch = concurrency * 8;
    let mut lo = start;
    while lo < end {
        let hi = (lo + batch).min(end);
        let results = if concurrency == 1 {
            (lo..hi).map(&work).collect::<Vec<_>>()
        } else {
            parallel_batch(lo, hi, concurrency, &work)
        };
        let mut ok = Vec::with_capacity(results.len());
        let mut failed = Vec::new();
        let mut first_err = None;
        for (offset, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) if failed.is_empty() => ok.push(v),
                Ok(_) => {}
                Err(e) => {
                    failed.push((lo + offset) as u64);
                    first_err.get_or_insert(e);
                }
            }
        }
        if !ok.is_empty() {
            commit(ok).map_err(OrderedError::Commit)?;
        }
        if let Some(error) = first_err {
            return Err(OrderedError::Work { indices: failed, error });
        }
        lo = hi;
    }
    Ok(())
}

fn parallel_batch<T: Send, E: Send, W: Fn(usize) -> Result<T, E> + Sync>(
    lo: usize,
    hi: usize,
    concurrency: usize,
    work: &W,
) -> Vec<Result<T, E>> {
    let slots: Vec<Mutex<Option<Result<T, E>>>> = (lo..hi).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(lo);
    std::thread::scope(|s| {
        for _ in 0..concurrency.min(hi - lo) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= hi {
                    break;
                }
                let r = work(i);
                *slots[i - lo].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot is filled")).collect()
}

#[derive(Debug, PartialEq)]
pub(crate) enum OrderedError<E, CE> {
    Work { indices: Vec<u64>, error: E },
    Commit(CE),
}
