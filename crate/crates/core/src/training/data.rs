use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::tensor::{Float, Tensor};

/// One labelled clip in network layout `(c, L, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x: Tensor,
    pub label: usize,
    pub city: usize,
}

impl Sample {
    pub fn from_feature(id: impl Into<String>, fm: &FeatureMap, label: usize, city: usize) -> Sample {
        Sample { id: id.into(), x: fm.to_chw(), label, city }
    }
}

/// Clips sharing one `(c, L, n)` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub shape: [usize; 3],
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<SampleSet> {
        let first = samples.first().ok_or_else(|| Error::input("empty sample set"))?;
        let s = first.x.shape();
        if s.len() != 3 {
            return Err(Error::dim(format!("sample {} has shape {s:?}, expected (c, L, n)", first.id)));
        }
        let shape = [s[0], s[1], s[2]];
        if let Some(bad) = samples.iter().find(|x| x.x.shape() != shape) {
            return Err(Error::dim(format!("sample {} has shape {:?}, set is {shape:?}", bad.id, bad.x.shape())));
        }
        Ok(SampleSet { shape, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn cities(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.city).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        SampleSet { shape: self.shape, samples: idx.iter().map(|&i| self.samples[i].clone()).collect() }
    }

    /// Stacks the selected clips into `(B, c, L, n)`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<usize>, Vec<usize>) {
        let mut data = Vec::with_capacity(idx.len() * self.shape.iter().product::<usize>());
        for &i in idx {
            data.extend_from_slice(self.samples[i].x.data());
        }
        let [c, l, n] = self.shape;
        let x = Tensor::new(&[idx.len(), c, l, n], data).expect("uniform shapes");
        (x, idx.iter().map(|&i| self.samples[i].label).collect(), idx.iter().map(|&i| self.samples[i].city).collect())
    }

    pub fn extend(&mut self, other: &SampleSet) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::dim(format!("cannot merge {:?} into {:?}", other.shape, self.shape)));
        }
        self.samples.extend(other.samples.iter().cloned());
        Ok(())
    }
}

/// Per (channel, filter) standardisation fitted on training clips.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub channels: usize,
    pub filters: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(set: &SampleSet) -> Standardizer {
        let [c, l, n] = set.shape;
        let mut sum = vec![0.0f64; c * n];
        let mut sq = vec![0.0f64; c * n];
        for s in &set.samples {
            for ch in 0..c {
                for t in 0..l {
                    for f in 0..n {
                        let v = s.x.data()[(ch * l + t) * n + f] as f64;
                        sum[ch * n + f] += v;
                        sq[ch * n + f] += v * v;
                    }
                }
            }
        }
        let count = (set.len() * l) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / count - m * m).max(0.0).sqrt().max(1e-6)).collect();
        Standardizer { channels: c, filters: n, mean, std }
    }

    pub fn apply(&self, set: &mut SampleSet) -> Result<()> {
        let [c, l, n] = set.shape;
        if (c, n) != (self.channels, self.filters) {
            return Err(Error::dim(format!("standardizer fitted on ({}, {}), set has ({c}, {n})", self.channels, self.filters)));
        }
        for s in &mut set.samples {
            let d = s.x.data_mut();
            for ch in 0..c {
                for t in 0..l {
                    for f in 0..n {
                        let i = (ch * l + t) * n + f;
                        let k = ch * n + f;
                        d[i] = ((d[i] as f64 - self.mean[k]) / self.std[k]) as Float;
                    }
                }
            }
        }
        Ok(())
    }

    /// Metadata lines for checkpoints.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        vec![
            ("norm_shape".into(), format!("{},{}", self.channels, self.filters)),
            ("norm_mean".into(), join(&self.mean)),
            ("norm_std".into(), join(&self.std)),
        ]
    }

    pub fn from_meta(meta: &[(String, String)]) -> Result<Option<Standardizer>> {
        let get = |k: &str| meta.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str());
        let (Some(shape), Some(mean), Some(std)) = (get("norm_shape"), get("norm_mean"), get("norm_std")) else {
            return Ok(None);
        };
        let bad = || Error::config("malformed standardizer metadata");
        let nums = |s: &str| s.split(',').map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
        let dims = shape.split(',').map(|x| x.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        let (mean, std) = (nums(mean)?, nums(std)?);
        if dims.len() != 2 || mean.len() != dims[0] * dims[1] || std.len() != mean.len() {
            return Err(bad());
        }
        Ok(Some(Standardizer { channels: dims[0], filters: dims[1], mean, std }))
    }
}

/// Splits `labels` into (train, validation) index lists.
///
/// Per scene, `round(frac · count)` clips (at least one when the scene has
/// two or more) are drawn round-robin over cities, so validation clips
/// spread across cities. Deterministic in `seed`.
pub fn stratified_split(labels: &[usize], cities: &[usize], frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.len() != cities.len() {
        return Err(Error::input("labels and cities differ in length"));
    }
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::config(format!("validation fraction {frac} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_scenes = labels.iter().max().map_or(0, |m| m + 1);
    let n_cities = cities.iter().max().map_or(0, |m| m + 1);
    let mut val = Vec::new();
    for scene in 0..n_scenes {
        let mut by_city: Vec<Vec<usize>> = vec![Vec::new(); n_cities];
        for (i, (&l, &c)) in labels.iter().zip(cities).enumerate() {
            if l == scene {
                by_city[c].push(i);
            }
        }
        by_city.iter_mut().for_each(|v| v.shuffle(&mut rng));
        let count: usize = by_city.iter().map(Vec::len).sum();
        let mut want = (frac * count as f64).round() as usize;
        if frac > 0.0 && count >= 2 {
            want = want.max(1);
        }
        want = want.min(count.saturating_sub(1));
        // rotate the starting city per scene so cities share the load
        let mut city = scene % n_cities.max(1);
        while want > 0 {
            if let Some(i) = by_city[city].pop() {
                val.push(i);
                want -= 1;
            }
            city = (city + 1) % n_cities;
        }
    }
    val.sort_unstable();
    let train = (0..labels.len()).filter(|i| val.binary_search(i).is_err()).collect();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..60).map(|i| i % 10).collect();
        let cities: Vec<usize> = (0..60).map(|i| (i / 10) % 4).collect();
        let (tr, va) = stratified_split(&labels, &cities, 0.1, 3).unwrap();
        assert_eq!(tr.len() + va.len(), 60);
        assert_eq!(va.len(), 10);
        let mut scenes: Vec<usize> = va.iter().map(|&i| labels[i]).collect();
        scenes.sort_unstable();
        assert_eq!(scenes, (0..10).collect::<Vec<_>>());
        let mut per_city = [0; 4];
        va.iter().for_each(|&i| per_city[cities[i]] += 1);
        assert!(per_city.iter().all(|&c| c >= 2), "{per_city:?}");
        assert_eq!(stratified_split(&labels, &cities, 0.1, 3).unwrap(), (tr, va));
    }

    #[test]
    fn standardizer_zero_mean_unit_var() {
        let samples = (0..4)
            .map(|i| Sample {
                id: format!("c{i}"),
                x: Tensor::from_fn(&[2, 3, 2], |j| (j * 7 % 5) as Float + i as Float),
                label: 0,
                city: 0,
            })
            .collect();
        let mut set = SampleSet::new(samples).unwrap();
        let st = Standardizer::fit(&set);
        st.apply(&mut set).unwrap();
        let again = Standardizer::fit(&set);
        assert!(again.mean.iter().all(|m| m.abs() < 1e-6));
        assert!(again.std.iter().all(|s| (s - 1.0).abs() < 1e-5));
        assert_eq!(Standardizer::from_meta(&st.to_meta()).unwrap().unwrap(), st);
    }
}
