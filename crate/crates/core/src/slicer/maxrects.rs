use serde::Serialize;

use crate::grid::ChannelRect;

/// An axis-aligned free region of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FreeRect {
    pub f0: u32,
    pub s0: u32,
    pub f_ext: u32,
    pub s_ext: u32,
}

impl FreeRect {
    pub fn area(&self) -> u32 {
        self.f_ext * self.s_ext
    }

    fn f_end(&self) -> u32 {
        self.f0 + self.f_ext
    }

    fn s_end(&self) -> u32 {
        self.s0 + self.s_ext
    }

    fn intersects(&self, r: &ChannelRect) -> bool {
        self.f0 < r.f_end() && r.f0 < self.f_end() && self.s0 < r.s_end() && r.s0 < self.s_end()
    }

    fn contains(&self, o: &FreeRect) -> bool {
        o.f0 >= self.f0 && o.f_end() <= self.f_end() && o.s0 >= self.s0 && o.s_end() <= self.s_end()
    }

    /// Whether an `f_ext` by `s_ext` box anchored at this rect's origin fits inside it.
    pub fn fits(&self, f_ext: u32, s_ext: u32) -> bool {
        f_ext <= self.f_ext && s_ext <= self.s_ext
    }

    /// Bottom-left vertex, time-major: `(s0, f0)`.
    pub fn vertex(&self) -> (u32, u32) {
        (self.s0, self.f0)
    }
}

/// Maximal free rectangles of a partially filled grid.
#[derive(Debug, Clone)]
pub struct MaxRects {
    free: Vec<FreeRect>,
}

impl MaxRects {
    pub fn new(f: u32, s: u32) -> Self {
        Self {
            free: vec![FreeRect {
                f0: 0,
                s0: 0,
                f_ext: f,
                s_ext: s,
            }],
        }
    }

    pub fn free(&self) -> &[FreeRect] {
        &self.free
    }

    pub fn largest_area(&self) -> u32 {
        self.free.iter().map(FreeRect::area).max().unwrap_or(0)
    }

    /// Distinct bottom-left vertices of the free rects, ordered by slot then frequency.
    pub fn vertices(&self) -> Vec<(u32, u32)> {
        let mut v: Vec<_> = self.free.iter().map(FreeRect::vertex).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Free rects whose bottom-left corner is `vertex`, widest first.
    pub fn rects_at(&self, vertex: (u32, u32)) -> Vec<FreeRect> {
        let mut rs: Vec<_> = self
            .free
            .iter()
            .copied()
            .filter(|r| r.vertex() == vertex)
            .collect();
        rs.sort_unstable_by(|a, b| b.f_ext.cmp(&a.f_ext).then(b.s_ext.cmp(&a.s_ext)));
        rs
    }

    /// Marks `used` as occupied: every free rect it touches is split into
    /// its maximal remainders, then rects contained in others are pruned.
    pub fn place(&mut self, used: &ChannelRect) {
        let mut next = Vec::with_capacity(self.free.len() + 4);
        for r in self.free.drain(..) {
            if !r.intersects(used) {
                next.push(r);
                continue;
            }
            if used.f0 > r.f0 {
                next.push(FreeRect {
                    f_ext: used.f0 - r.f0,
                    ..r
                });
            }
            if used.f_end() < r.f_end() {
                next.push(FreeRect {
                    f0: used.f_end(),
                    f_ext: r.f_end() - used.f_end(),
                    ..r
                });
            }
            if used.s0 > r.s0 {
                next.push(FreeRect {
                    s_ext: used.s0 - r.s0,
                    ..r
                });
            }
            if used.s_end() < r.s_end() {
                next.push(FreeRect {
                    s0: used.s_end(),
                    s_ext: r.s_end() - used.s_end(),
                    ..r
                });
            }
        }
        self.free = prune(next);
    }
}

fn prune(rects: Vec<FreeRect>) -> Vec<FreeRect> {
    let mut keep: Vec<FreeRect> = Vec::with_capacity(rects.len());
    for (i, r) in rects.iter().enumerate() {
        let dominated = rects.iter().enumerate().any(|(j, o)| {
            // Identical rects: keep the first occurrence only.
            j != i && o.contains(r) && (o != r || j < i)
        });
        if !dominated {
            keep.push(*r);
        }
    }
    keep
}
