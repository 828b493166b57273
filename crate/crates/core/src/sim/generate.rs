//! Random room generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::all_states;
use super::{DistanceField, HeightLevel, PlacedObject, RoomLayout, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub width: usize,
    pub height: usize,
    pub categories: usize,
    /// Target categories; each layout holds exactly one instance of each.
    pub targets: Vec<usize>,
    /// Additional objects drawn from the non-target categories.
    pub distractors: usize,
    pub wall_segments: usize,
    pub max_wall_len: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            width: 10,
            height: 10,
            categories: 16,
            targets: vec![1, 3, 5, 7],
            distractors: 4,
            wall_segments: 2,
            max_wall_len: 3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.targets.is_empty() {
            return Err("at least one target category is required".into());
        }
        if let Some(t) = self.targets.iter().find(|&&t| t >= self.categories) {
            return Err(format!("target category {t} >= category count {}", self.categories));
        }
        let mut sorted = self.targets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.targets.len() {
            return Err("duplicate target categories".into());
        }
        if self.distractors > 0 && self.targets.len() == self.categories {
            return Err("no non-target categories left for distractors".into());
        }
        let cells = self.width * self.height;
        if self.targets.len() + self.distractors + self.wall_segments * self.max_wall_len > cells / 2 {
            return Err("too many objects and walls for the grid".into());
        }
        Ok(())
    }
}

/// Height level a category's instances are placed at.
pub fn category_level(category: usize) -> HeightLevel {
    [HeightLevel::Low, HeightLevel::Mid, HeightLevel::High][category % 3]
}

fn try_generate(gen: &GeneratorConfig, id: u32, rng: &mut ChaCha8Rng) -> Option<RoomLayout> {
    let (w, h) = (gen.width, gen.height);
    let mut walls = vec![false; w * h];
    for _ in 0..gen.wall_segments {
        let len = rng.gen_range(2..=gen.max_wall_len.max(2));
        let horizontal = rng.gen_bool(0.5);
        let (x0, y0) = if horizontal {
            (rng.gen_range(1..w.saturating_sub(len).max(2)), rng.gen_range(1..h - 1))
        } else {
            (rng.gen_range(1..w - 1), rng.gen_range(1..h.saturating_sub(len).max(2)))
        };
        for i in 0..len {
            let (x, y) = if horizontal { (x0 + i, y0) } else { (x0, y0 + i) };
            if x < w && y < h {
                walls[y * w + x] = true;
            }
        }
    }
    let mut free: Vec<usize> = (0..w * h).filter(|&i| !walls[i]).collect();
    free.shuffle(rng);
    let others: Vec<usize> = (0..gen.categories).filter(|c| !gen.targets.contains(c)).collect();
    let mut cats: Vec<usize> = gen.targets.clone();
    for _ in 0..gen.distractors {
        cats.push(*others.choose(rng)?);
    }
    if free.len() < cats.len() {
        return None;
    }
    let objects = cats
        .iter()
        .zip(&free)
        .map(|(&category, &cell)| PlacedObject {
            category,
            x: (cell % w) as i32,
            y: (cell / w) as i32,
            level: category_level(category),
        })
        .collect();
    RoomLayout::new(id, w, h, walls, objects, gen.categories, gen.targets.clone()).ok()
}

/// Every valid state reaches a success state for every target.
fn fully_solvable(layout: &RoomLayout, sim: &SimConfig) -> bool {
    let states = all_states(layout);
    layout.targets().iter().all(|&t| match DistanceField::new(layout, sim, t) {
        Ok(field) => states.iter().all(|p| field.distance(p).is_some()),
        Err(_) => false,
    })
}

/// Draws layouts until one is connected and solvable for all targets.
pub fn generate_layout(gen: &GeneratorConfig, sim: &SimConfig, id: u32, rng: &mut ChaCha8Rng) -> RoomLayout {
    loop {
        if let Some(layout) = try_generate(gen, id, rng) {
            if fully_solvable(&layout, sim) {
                return layout;
            }
        }
    }
}

/// `count` layouts with ids `first_id..`, determined by `seed`.
pub fn generate_suite(
    gen: &GeneratorConfig,
    sim: &SimConfig,
    count: usize,
    first_id: u32,
    seed: u64,
) -> Vec<RoomLayout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| generate_layout(gen, sim, first_id + i as u32, &mut rng)).collect()
}
