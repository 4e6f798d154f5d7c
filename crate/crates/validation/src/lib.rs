//! Helpers for the acceptance suite: verdict lines and an order-preserving
//! parallel map over independent repetitions.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Prints `PASS`/`FAIL` for one criterion and returns `pass`.
pub fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Threads to use: the available parallelism, at least one.
pub fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `items.map(f)` on up to [`workers`] threads; output order follows `items`.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers().min(items.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(k) else { break };
                let r = f(item);
                *slots[k].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every item was processed"))
        .collect()
}
