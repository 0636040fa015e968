use super::{BoundingBox, GeoSet};
use crate::scalar::Scalar;

const NODE_CAPACITY: usize = 10;

#[derive(Debug, Clone)]
struct Node<T> {
    bbox: BoundingBox<T>,
    /// Child node indices for inner nodes, item positions for leaves.
    children: Vec<usize>,
    leaf: bool,
}

/// Packed (sort-tile-recursive) R-tree over the bounding boxes of a [`GeoSet`].
/// Queries return positions into the source set.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    nodes: Vec<Node<T>>,
    item_boxes: Vec<BoundingBox<T>>,
    root: Option<usize>,
}

impl<T: Scalar> SpatialIndex<T> {
    pub fn build(set: &GeoSet<T>) -> Self {
        Self::from_boxes(set.geometries().map(|g| g.bbox()).collect())
    }

    pub fn from_boxes(item_boxes: Vec<BoundingBox<T>>) -> Self {
        let mut index = Self { nodes: Vec::new(), item_boxes, root: None };
        if index.item_boxes.is_empty() {
            return index;
        }
        let entries: Vec<(usize, BoundingBox<T>)> = index.item_boxes.iter().copied().enumerate().collect();
        let mut level = index.pack(entries, true);
        while level.len() > 1 {
            let entries = level.iter().map(|&n| (n, index.nodes[n].bbox)).collect();
            level = index.pack(entries, false);
        }
        index.root = level.first().copied();
        index
    }

    fn pack(&mut self, mut entries: Vec<(usize, BoundingBox<T>)>, leaf: bool) -> Vec<usize> {
        let n = entries.len();
        let node_count = n.div_ceil(NODE_CAPACITY);
        let slices = (node_count as f64).sqrt().ceil().max(1.0) as usize;
        let per_slice = slices * NODE_CAPACITY;
        let cmp = |a: T, b: T| a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal);
        entries.sort_by(|a, b| cmp(a.1.center().lon, b.1.center().lon));
        let mut out = Vec::with_capacity(node_count);
        for slice in entries.chunks_mut(per_slice) {
            slice.sort_by(|a, b| cmp(a.1.center().lat, b.1.center().lat));
            for group in slice.chunks(NODE_CAPACITY) {
                let bbox = group[1..].iter().fold(group[0].1, |acc, e| acc.union(&e.1));
                self.nodes.push(Node { bbox, children: group.iter().map(|e| e.0).collect(), leaf });
                out.push(self.nodes.len() - 1);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.item_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_boxes.is_empty()
    }

    /// Positions of items whose bounding box intersects `query`, ascending.
    pub fn query(&self, query: &BoundingBox<T>) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bbox.intersects(query) {
                continue;
            }
            if node.leaf {
                out.extend(node.children.iter().copied().filter(|&i| self.item_boxes[i].intersects(query)));
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        out.sort_unstable();
        out
    }
}
