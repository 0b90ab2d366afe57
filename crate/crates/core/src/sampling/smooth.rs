use crate::imageio::SaliencyMap;
use crate::Real;

/// Offsets `(dr, dc)` of the flat disk `dr² + dc² <= radius²`.
fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    (-r..=r)
        .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| dr * dr + dc * dc <= r * r)
        .collect()
}

/// One smoothing pass; mass-preserving away from the top and bottom rows.
fn mean_pass<T: Real>(data: &[T], width: usize, height: usize, offsets: &[(isize, isize)]) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = T::zero();
            let mut count = 0usize;
            for (dr, dc) in offsets {
                let rr = r as isize + dr;
                if rr < 0 || rr >= height as isize {
                    continue;
                }
                let cc = (c as isize + dc).rem_euclid(width as isize) as usize;
                acc += data[rr as usize * width + cc];
                count += 1;
            }
            out[r * width + c] = acc / T::of_usize(count);
        }
    }
    out
}

/// Iterated flat-kernel smoothing over a disk of radius `bandwidth`, then
/// rescaled so the maximum is 1.
///
/// Columns wrap (longitude is periodic); windows are truncated at the top and
/// bottom rows and averaged over their in-bounds pixels. `iters == 0` returns
/// the input untouched.
pub fn mean_shift_filter<T: Real>(map: &SaliencyMap<T>, bandwidth: usize, iters: usize) -> SaliencyMap<T> {
    if iters == 0 {
        return map.clone();
    }
    smooth_unnormalized(map, bandwidth, iters).normalized()
}

pub(crate) fn smooth_unnormalized<T: Real>(map: &SaliencyMap<T>, bandwidth: usize, iters: usize) -> SaliencyMap<T> {
    let offsets = disk(bandwidth.max(1));
    let (w, h) = (map.width(), map.height());
    let mut data = map.data().to_vec();
    for _ in 0..iters {
        data = mean_pass(&data, w, h, &offsets);
    }
    SaliencyMap::new(w, h, data).expect("averaging keeps values non-negative")
}
