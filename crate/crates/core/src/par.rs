//! Bounded, order-preserving parallel map on scoped threads.

use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;

/// Applies `f` to every item using at most `workers` threads. Output order
/// matches input order regardless of completion order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                *slots[i].lock() = Some(f(&items[i]));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_is_stable() {
        let v: Vec<u64> = (0..100).collect();
        let out = super::map_ordered(&v, 8, |&x| {
            std::thread::sleep(std::time::Duration::from_micros(100 - x));
            x * 2
        });
        assert_eq!(out, v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
