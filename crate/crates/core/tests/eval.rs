mod common;

use crbm_core::eval::{
    compare_ir, information_rate, information_rate_symbols, key_correlations, keyscape,
    ks_key_estimate, render_bars, render_heatmap, render_keyscape, Key, KK_MAJOR, KK_MINOR,
};
use crbm_core::pianoroll::{transpose, PianoRoll};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

/// Recounts everything from scratch at every step.
fn brute_force_ir(seq: &[u32]) -> f64 {
    fn h(counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.log2()
            })
            .sum()
    }
    fn counts(xs: impl Iterator<Item = u32>) -> Vec<usize> {
        let mut v: Vec<u32> = xs.collect();
        v.sort_unstable();
        let mut out = Vec::new();
        let mut i = 0;
        while i < v.len() {
            let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
            out.push(j);
            i += j;
        }
        out
    }
    let mut total = 0.0;
    for n in 1..seq.len() {
        let marginal = counts(seq[..n].iter().copied());
        let ctx = seq[n - 1];
        let succ: Vec<u32> = (1..n).filter(|&m| seq[m - 1] == ctx).map(|m| seq[m]).collect();
        if succ.is_empty() {
            continue;
        }
        let cond = counts(succ.into_iter());
        total += (h(&marginal) - h(&cond)).max(0.0);
    }
    total / (seq.len() - 1) as f64
}

fn roll_from_symbols(seq: &[usize], p: usize) -> PianoRoll {
    let mut a = Array2::zeros((seq.len(), p));
    for (t, &s) in seq.iter().enumerate() {
        for bit in 0..p {
            if (s >> bit) & 1 == 1 {
                a[[t, bit]] = 1.0;
            }
        }
    }
    PianoRoll::new(a, 40).unwrap()
}

#[test]
fn constant_roll_has_zero_rate() {
    let roll = PianoRoll::new(Array2::from_elem((32, 6), 1.0), 0).unwrap();
    assert_eq!(information_rate(&roll, 0.5).unwrap().average_ir, 0.0);
    assert_eq!(information_rate(&PianoRoll::zeros(32, 6, 0), 0.5).unwrap().average_ir, 0.0);
}

#[test]
fn alternating_matches_brute_force() {
    for len in [8usize, 9, 16, 33] {
        let seq: Vec<u32> = (0..len as u32).map(|i| i % 2).collect();
        let rep = information_rate_symbols(&seq).unwrap();
        let oracle = brute_force_ir(&seq);
        assert!((rep.average_ir - oracle).abs() < 1e-9, "{len}");
        assert!(rep.average_ir < 1.0);
        let roll = roll_from_symbols(&seq.iter().map(|&s| s as usize + 1).collect::<Vec<_>>(), 3);
        assert!((information_rate(&roll, 0.5).unwrap().average_ir - oracle).abs() < 1e-9);
    }
}

#[test]
fn random_sequences_match_brute_force() {
    let mut rng = common::rng(21);
    for _ in 0..30 {
        let len = rng.random_range(2..60);
        let alphabet = rng.random_range(1..6);
        let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..alphabet)).collect();
        let rep = information_rate_symbols(&seq).unwrap();
        assert!((rep.average_ir - brute_force_ir(&seq)).abs() < 1e-9);
        assert!(rep.average_ir >= 0.0);
    }
}

#[test]
fn relabeling_and_transposition_invariance() {
    let mut rng = common::rng(22);
    let seq: Vec<usize> = (0..64).map(|_| rng.random_range(0..7)).collect();
    let base = information_rate(&roll_from_symbols(&seq, 3), 0.5).unwrap();
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..8).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<usize> = seq.iter().map(|&s| perm[s]).collect();
        let r = information_rate(&roll_from_symbols(&relabeled, 3), 0.5).unwrap();
        assert_eq!(r.average_ir, base.average_ir);
    }
    let roll = roll_from_symbols(&seq, 6);
    let (up, dropped) = transpose(&roll, 2).unwrap();
    assert_eq!(dropped, 0);
    assert_eq!(
        information_rate(&up, 0.5).unwrap().average_ir,
        information_rate(&roll, 0.5).unwrap().average_ir
    );
}

fn scale_roll(tonic: usize, steps: usize) -> PianoRoll {
    // pitch_base 0 makes row p pitch class p % 12
    let mut a = Array2::zeros((steps, 24));
    for t in 0..steps {
        for deg in [0usize, 2, 4, 5, 7, 9, 11] {
            a[[t, (tonic + deg) % 12]] = 1.0;
        }
    }
    PianoRoll::new(a, 0).unwrap()
}

#[test]
fn c_major_scale_correlates_best_with_c_major() {
    let roll = scale_roll(0, 8);
    // independent scoring: explicit correlation over all 24 rotations
    let hist: Vec<f64> = (0..12).map(|pc| if [0, 2, 4, 5, 7, 9, 11].contains(&pc) { 8.0 } else { 0.0 }).collect();
    let corr = |prof: &[f64; 12], tonic: usize| {
        let r: Vec<f64> = (0..12).map(|pc| prof[(pc + 12 - tonic) % 12]).collect();
        let (mh, mr) = (hist.iter().sum::<f64>() / 12.0, r.iter().sum::<f64>() / 12.0);
        let num: f64 = (0..12).map(|i| (hist[i] - mh) * (r[i] - mr)).sum();
        let dh: f64 = hist.iter().map(|x| (x - mh).powi(2)).sum();
        let dr: f64 = r.iter().map(|x| (x - mr).powi(2)).sum();
        num / (dh * dr).sqrt()
    };
    let major_best = (0..12).max_by(|&a, &b| corr(&KK_MAJOR, a).total_cmp(&corr(&KK_MAJOR, b))).unwrap();
    assert_eq!(major_best, 0);
    let lib = key_correlations(&std::array::from_fn(|i| hist[i])).unwrap();
    for tonic in 0..12 {
        assert!((lib[tonic] - corr(&KK_MAJOR, tonic)).abs() < 1e-12);
        assert!((lib[12 + tonic] - corr(&KK_MINOR, tonic)).abs() < 1e-12);
    }
    assert_eq!(ks_key_estimate(&roll), Some(Key::new(0, false)));
}

#[test]
fn key_estimate_is_rotation_equivariant() {
    let mut rng = common::rng(23);
    for _ in 0..20 {
        let a = Array2::from_shape_simple_fn((8, 24), || if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 });
        let roll = PianoRoll::new(a.clone(), 0).unwrap();
        let shifted = PianoRoll::new(a, 2).unwrap();
        assert_eq!(ks_key_estimate(&shifted), ks_key_estimate(&roll).map(|k| k.transposed(2)));
    }
    assert_eq!(ks_key_estimate(&PianoRoll::zeros(8, 24, 0)), None);
}

#[test]
fn keyscape_levels() {
    let mono = scale_roll(7, 32);
    let ks = keyscape(&mono, 4).unwrap();
    assert_eq!(ks.levels.len(), 4);
    assert_eq!(ks.levels[3].len(), 8);
    assert!(ks.levels.iter().flatten().all(|&l| l == Some(Key::new(7, false))));
    assert_eq!(keyscape(&mono, 1).unwrap().levels, vec![vec![Some(Key::new(7, false))]]);
    assert!(keyscape(&mono, 0).is_err());
    assert!(keyscape(&mono, 7).is_err());

    // first half in C, second half a fifth higher
    let mut a = Array2::zeros((32, 24));
    a.slice_mut(ndarray::s![..16, ..]).assign(&scale_roll(0, 16).view());
    a.slice_mut(ndarray::s![16.., ..]).assign(&scale_roll(7, 16).view());
    let ks = keyscape(&PianoRoll::new(a, 0).unwrap(), 3).unwrap();
    assert_eq!(ks.levels[1], vec![Some(Key::new(0, false)), Some(Key::new(7, false))]);
    assert!(ks.levels[2][..2].iter().all(|&l| l == Some(Key::new(0, false))));
    assert!(ks.levels[2][2..].iter().all(|&l| l == Some(Key::new(7, false))));

    let svg = render_keyscape(&ks).unwrap();
    assert_eq!(svg, render_keyscape(&ks).unwrap());
    assert_eq!(String::from_utf8(svg).unwrap().matches(r#"class="cell""#).count(), 7);
}

#[test]
fn renderers_are_stable() {
    let mut rng = common::rng(24);
    let m = common::random_array(&mut rng, 5, 7);
    assert_eq!(render_heatmap(&m).unwrap(), render_heatmap(&m.clone()).unwrap());
    let v = [0.5, -1.0, 2.0];
    assert_eq!(render_bars(&v).unwrap(), render_bars(&v).unwrap());
}

#[test]
fn structured_group_beats_shuffled_group() {
    let mut rng = common::rng(25);
    let mut structured = Vec::new();
    let mut shuffled = Vec::new();
    for _ in 0..10 {
        let motif: Vec<usize> = (0..4).map(|_| rng.random_range(1..64)).collect();
        let mut seq: Vec<usize> = (0..64).map(|t| motif[t % 4]).collect();
        for slot in seq.iter_mut().step_by(9) {
            *slot = rng.random_range(1..64);
        }
        structured.push(roll_from_symbols(&seq, 6));
        seq.shuffle(&mut rng);
        shuffled.push(roll_from_symbols(&seq, 6));
    }
    let constant = vec![PianoRoll::zeros(16, 6, 0); 3];
    let groups = vec![
        ("structured".to_string(), structured.clone()),
        ("shuffled".to_string(), shuffled),
        ("constant".to_string(), constant),
        ("structured_again".to_string(), structured),
    ];
    let cmp = compare_ir(&groups, &[(0, 1), (0, 3)], 0.5).unwrap();
    assert!(cmp.groups[0].mean > cmp.groups[1].mean);
    assert!(cmp.comparisons[0].welch.t > 0.0);
    assert_eq!(cmp.groups[2].mean, 0.0);
    assert_eq!(cmp.groups[0].mean - cmp.groups[3].mean, 0.0);
    let mut csv = Vec::new();
    cmp.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("group,n,mean_ir,std_ir\nstructured,10,"));
    assert!(text.contains("compare,structured,shuffled,"));
}
