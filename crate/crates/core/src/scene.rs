use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::topology::Topology;

/// Ground-truth annotation of one image: per person, one optional position
/// per part (`None` = unlabeled or invisible).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub num_parts: usize,
    pub persons: Vec<Vec<Option<Point>>>,
}

impl Scene {
    pub fn empty(width: usize, height: usize, num_parts: usize) -> Self {
        Scene {
            width,
            height,
            num_parts,
            persons: Vec::new(),
        }
    }

    pub fn new(
        width: usize,
        height: usize,
        num_parts: usize,
        persons: Vec<Vec<Option<Point>>>,
    ) -> Result<Self> {
        let scene = Scene {
            width,
            height,
            num_parts,
            persons,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Scene(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        for (k, person) in self.persons.iter().enumerate() {
            if person.len() != self.num_parts {
                return Err(Error::Scene(format!(
                    "person {k} has {} parts, expected {}",
                    person.len(),
                    self.num_parts
                )));
            }
            for (j, kp) in person.iter().enumerate() {
                if let Some(p) = kp {
                    if !self.contains(*p) {
                        return Err(Error::Scene(format!(
                            "person {k} part {j} at ({}, {}) lies outside [0,{})x[0,{})",
                            p.x, p.y, self.width, self.height
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn check_topology(&self, topo: &Topology) -> Result<()> {
        if self.num_parts != topo.num_parts() {
            return Err(Error::Scene(format!(
                "scene has {} parts per person, topology has {}",
                self.num_parts,
                topo.num_parts()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn num_persons(&self) -> usize {
        self.persons.len()
    }

    /// Number of persons with part `j` labeled.
    pub fn labeled_count(&self, j: usize) -> usize {
        self.persons.iter().filter(|p| p[j].is_some()).count()
    }

    /// A copy containing only person `k`.
    pub fn single(&self, k: usize) -> Scene {
        Scene {
            persons: vec![self.persons[k].clone()],
            ..self.clone()
        }
    }
}
